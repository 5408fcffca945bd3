//! Network layers. Forward passes cache what the backward pass needs;
//! backward passes return the first-order gradient flowing to the previous
//! layer (always plain chain rule, independent of the fractional order)
//! together with parameter gradients.

mod conv;
mod dense;
mod flatten;
mod pool;

pub use conv::{ConvBackend, ConvLayer};
pub use dense::DenseLayer;
pub use flatten::{flatten_backward, flatten_forward, FlattenLayer};
pub use pool::{PoolKind, PoolLayer};
