//! The model zoo: six base architectures crossed with five content-encoder
//! variants, assembled from shared building blocks.

mod encoder;
mod plm;
mod rec;
mod scorer;
pub mod spec;
mod user;

pub use encoder::{ContentEncoder, EncoderKind, EMBED_SIGMA};
pub use plm::{PlmBackend, StubPlm, PLM_MAX_TOKENS};
pub use rec::{assemble_variant, RecModel};
pub use scorer::Scorer;
pub use spec::{enumerate_grid, BaseModel, Task, VariantKind, VariantSpec};
pub use user::UserModule;
