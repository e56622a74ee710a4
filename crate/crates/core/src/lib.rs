pub mod fock;
pub mod linalg;
pub mod protocol;
pub mod keyrate;
pub mod sdp;
pub mod bounds;
pub mod cli;
