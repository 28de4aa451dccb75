//! Dense vector/matrix kernels, distance functions, a finite-difference
//! gradient oracle, and the adaptive-gradient optimizer used by all training.

mod distance;
mod gradcheck;
mod linalg;
mod optim;

pub use distance::{distance, distance_gradients, DistanceKind};
pub use gradcheck::{check_gradient, numerical_gradient};
pub use linalg::{axpy, dot, norm, outer_acc, DenseMatrix};
pub use optim::{Adagrad, AdagradConfig};
