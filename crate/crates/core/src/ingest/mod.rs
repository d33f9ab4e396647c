//! On-disk formats, dataset manifests and synthetic fixtures.

pub mod answers;
pub mod fixture;
pub mod formats;
pub mod manifest;
pub mod matrix_json;

pub use answers::{parse_answers, read_answers, validate_answers, write_answers, AnswerDiagnostic};
pub use fixture::{generate_fixture, FixtureSpec};
pub use formats::{read_imap, read_lmap, read_pmap, write_imap, write_lmap, write_pmap};
pub use manifest::{
    validate_manifest, Dataset, DatasetManifest, ImageData, ImageEntry, ManifestDiagnostic,
};
pub use matrix_json::{read_matrix, write_matrix, MatrixFile, MatrixSpace};
