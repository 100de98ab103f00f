pub mod error; pub mod linalg; pub mod grid; pub mod timeline; pub mod family; pub mod fit; pub mod presets; pub mod diagonalize; pub mod evolution; pub mod geometry; pub use error::KgError;
