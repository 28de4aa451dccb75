pub mod eval;
pub mod export;
pub mod finetune;
pub mod generate;
pub mod train;
