//! Durable answer storage. The default store is an append-only JSON-lines
//! file, synced after every record and replayed on startup.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use costsight_core::costmatrix::AnswerRecord;
use costsight_core::ingest::answers::{encode_answer_line, parse_answers};

pub trait AnswerStore: Send + Sync {
    /// Every stored answer, in insertion order.
    fn load(&self) -> io::Result<Vec<AnswerRecord>>;
    /// Persists one answer and returns its id (its position in the store).
    fn append(&self, answer: &AnswerRecord) -> io::Result<u64>;
}

pub struct JsonlStore {
    path: PathBuf,
    state: Mutex<(File, u64)>,
}

impl JsonlStore {
    /// Opens or creates the store. A torn final line left by an interrupted
    /// write is cut off; any other malformed line is an error.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            log::warn!(
                "{}: dropping torn final record ({} bytes)",
                path.display(),
                text.len() - keep
            );
            file.set_len(keep as u64)?;
            file.seek(SeekFrom::End(0))?;
            text.truncate(keep);
        }
        let count = parse_answers(&text, &path.display().to_string())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?
            .len() as u64;
        Ok(Self {
            path,
            state: Mutex::new((file, count)),
        })
    }
}

impl AnswerStore for JsonlStore {
    fn load(&self) -> io::Result<Vec<AnswerRecord>> {
        let _guard = self.state.lock().expect("store lock");
        let text = std::fs::read_to_string(&self.path)?;
        parse_answers(&text, &self.path.display().to_string())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }

    fn append(&self, answer: &AnswerRecord) -> io::Result<u64> {
        let mut state = self.state.lock().expect("store lock");
        let mut line = encode_answer_line(answer);
        line.push('\n');
        state.0.write_all(line.as_bytes())?;
        state.0.sync_data()?;
        let id = state.1;
        state.1 += 1;
        Ok(id)
    }
}

/// Volatile store for tests and demos.
#[derive(Default)]
pub struct MemoryStore {
    answers: Mutex<Vec<AnswerRecord>>,
}

impl MemoryStore {
    pub fn new(answers: Vec<AnswerRecord>) -> Self {
        Self {
            answers: Mutex::new(answers),
        }
    }
}

impl AnswerStore for MemoryStore {
    fn load(&self) -> io::Result<Vec<AnswerRecord>> {
        Ok(self.answers.lock().expect("store lock").clone())
    }

    fn append(&self, answer: &AnswerRecord) -> io::Result<u64> {
        let mut answers = self.answers.lock().expect("store lock");
        answers.push(answer.clone());
        Ok(answers.len() as u64 - 1)
    }
}
