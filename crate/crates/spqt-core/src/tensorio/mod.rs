//! Matrix container, deterministic random streams, and file I/O.

mod io;
mod matrix;
mod stream;

pub use io::{format_value, load_csv, load_tensor, parse_csv, save_csv, save_tensor};
pub use matrix::DenseMatrix;
pub use stream::{make_stream, RandomStream, STREAM_ALGORITHM};
