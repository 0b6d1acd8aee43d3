//! Fixed-capacity experience buffer with uniform minibatch sampling and an
//! optional versioned binary snapshot for resumable runs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// One environment step. `done` records true termination only; time-limit
/// truncations are stored as `done = false` so the target bootstraps.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<R> {
    pub state: Vec<R>,
    pub action: Vec<R>,
    pub reward: R,
    pub next_state: Vec<R>,
    pub done: bool,
}

/// Ring buffer over transitions; oldest entries are overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<R> {
    storage: Vec<Transition<R>>,
    capacity: usize,
    head: usize,
    state_dim: usize,
    action_dim: usize,
}

impl<R: Real> ReplayBuffer<R> {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::usage("replay capacity must be positive"));
        }
        Ok(Self { storage: Vec::new(), capacity, head: 0, state_dim, action_dim })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn check_dims(&self, t: &Transition<R>) -> Result<()> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(Error::dim(format!(
                "transition dims ({}, {}) do not match buffer dims ({}, {})",
                t.state.len(),
                t.action.len(),
                self.state_dim,
                self.action_dim
            )));
        }
        if !t.reward.is_finite() {
            return Err(Error::TrainingHealth("non-finite reward pushed to replay".into()));
        }
        Ok(())
    }

    /// Appends a transition, evicting the oldest once at capacity.
    pub fn push(&mut self, t: Transition<R>) -> Result<()> {
        self.check_dims(&t)?;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    pub fn get(&self, idx: usize) -> &Transition<R> {
        &self.storage[idx]
    }

    /// `n` uniform index draws with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::usage("cannot sample from an empty replay buffer"));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.storage.len())).collect())
    }

    /// `n` uniform draws with replacement, cloned out of the buffer.
    pub fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<Transition<R>>> {
        let idx = self.sample_indices(n, rng)?;
        Ok(idx.into_iter().map(|i| self.storage[i].clone()).collect())
    }

    /// Writes a versioned binary snapshot: magic, version, dims, capacity,
    /// size, head, then the raw records (all scalars widened to f64 LE).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.state_dim as u32).to_le_bytes())?;
        w.write_all(&(self.action_dim as u32).to_le_bytes())?;
        w.write_all(&(self.capacity as u64).to_le_bytes())?;
        w.write_all(&(self.storage.len() as u64).to_le_bytes())?;
        w.write_all(&(self.head as u64).to_le_bytes())?;
        fn write_vec<R: Real>(w: &mut BufWriter<File>, v: &[R]) -> Result<()> {
            for &x in v {
                w.write_all(&crate::scalar::as_f64(x).to_le_bytes())?;
            }
            Ok(())
        }
        for t in &self.storage {
            write_vec(&mut w, &t.state)?;
            write_vec(&mut w, &t.action)?;
            w.write_all(&crate::scalar::as_f64(t.reward).to_le_bytes())?;
            write_vec(&mut w, &t.next_state)?;
            w.write_all(&[t.done as u8])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::usage("not a replay snapshot (bad magic)"));
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::usage(format!(
                "unsupported replay snapshot version {version} (expected {SNAPSHOT_VERSION})"
            )));
        }
        let state_dim = read_u32(&mut r)? as usize;
        let action_dim = read_u32(&mut r)? as usize;
        let capacity = read_u64(&mut r)? as usize;
        let size = read_u64(&mut r)? as usize;
        let head = read_u64(&mut r)? as usize;
        if size > capacity || head >= capacity.max(1) {
            return Err(Error::usage("corrupt replay snapshot header"));
        }
        let mut buf = Self::new(capacity, state_dim, action_dim)?;
        buf.head = head;
        fn read_vec<R: Real>(r: &mut BufReader<File>, n: usize) -> Result<Vec<R>> {
            (0..n).map(|_| Ok(real::<R>(read_f64(r)?))).collect()
        }
        for _ in 0..size {
            let state = read_vec(&mut r, state_dim)?;
            let action = read_vec(&mut r, action_dim)?;
            let reward = real::<R>(read_f64(&mut r)?);
            let next_state = read_vec(&mut r, state_dim)?;
            let mut done = [0u8; 1];
            r.read_exact(&mut done)?;
            buf.storage.push(Transition { state, action, reward, next_state, done: done[0] != 0 });
        }
        Ok(buf)
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"STRB";
const SNAPSHOT_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
