//! Swappable byte transports carrying newline-terminated packet lines.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// One direction of a duplex line channel. `receive` returns `Ok(None)`
/// when the deadline passes with no complete line available.
pub trait Transport: Send {
    fn send(&mut self, line: &str) -> Result<()>;
    fn receive(&mut self, timeout_ms: u64) -> Result<Option<String>>;
}

impl Transport for Box<dyn Transport> {
    fn send(&mut self, line: &str) -> Result<()> {
        (**self).send(line)
    }

    fn receive(&mut self, timeout_ms: u64) -> Result<Option<String>> {
        (**self).receive(timeout_ms)
    }
}

/// In-memory loopback half built on channels; make a connected pair with
/// [`MemoryTransport::pair`]. Each half may live on its own thread.
pub struct MemoryTransport {
    tx: mpsc::Sender<String>,
    rx: mpsc::Receiver<String>,
}

impl MemoryTransport {
    pub fn pair() -> (MemoryTransport, MemoryTransport) {
        let (a_tx, b_rx) = mpsc::channel();
        let (b_tx, a_rx) = mpsc::channel();
        (
            MemoryTransport { tx: a_tx, rx: a_rx },
            MemoryTransport { tx: b_tx, rx: b_rx },
        )
    }
}

impl Transport for MemoryTransport {
    fn send(&mut self, line: &str) -> Result<()> {
        self.tx
            .send(line.to_string())
            .map_err(|_| Error::Transport("peer hung up".into()))
    }

    fn receive(&mut self, timeout_ms: u64) -> Result<Option<String>> {
        // Drain without blocking first so queued lines never pay the wait.
        match self.rx.try_recv() {
            Ok(line) => return Ok(Some(line)),
            Err(mpsc::TryRecvError::Empty) => {}
            Err(mpsc::TryRecvError::Disconnected) => {
                return Err(Error::Transport("peer hung up".into()))
            }
        }
        match self.rx.recv_timeout(Duration::from_millis(timeout_ms)) {
            Ok(line) => Ok(Some(line)),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(None),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("peer hung up".into()))
            }
        }
    }
}

/// Bridge over arbitrary byte streams, e.g. standard input/output. The
/// receive deadline is honored when the reader reports `WouldBlock`;
/// a genuinely blocking reader (a real stdin) simply blocks.
pub struct StreamTransport<R: Read + Send, W: Write + Send> {
    reader: R,
    writer: W,
    pending: Vec<u8>,
}

impl StreamTransport<std::io::Stdin, std::io::Stdout> {
    /// Bind to the process's standard streams.
    pub fn stdio() -> Self {
        StreamTransport::new(std::io::stdin(), std::io::stdout())
    }
}

impl<R: Read + Send, W: Write + Send> StreamTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamTransport { reader, writer, pending: Vec::new() }
    }
}

impl<R: Read + Send, W: Write + Send> Transport for StreamTransport<R, W> {
    fn send(&mut self, line: &str) -> Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn receive(&mut self, timeout_ms: u64) -> Result<Option<String>> {
        let deadline = Instant::now() + Duration::from_millis(timeout_ms);
        loop {
            if let Some(pos) = self.pending.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = self.pending.drain(..=pos).collect();
                return Ok(Some(String::from_utf8_lossy(&line).into_owned()));
            }
            let mut buf = [0u8; 256];
            match self.reader.read(&mut buf) {
                Ok(0) => {
                    return if self.pending.is_empty() {
                        Err(Error::Transport("end of stream".into()))
                    } else {
                        Ok(None)
                    }
                }
                Ok(n) => self.pending.extend_from_slice(&buf[..n]),
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Ok(None);
                    }
                    std::thread::sleep(Duration::from_millis(1));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Shared in-process byte queue implementing `Read`/`Write`; an empty
/// queue reads as `WouldBlock` so a [`StreamTransport`] over it can honor
/// its deadline. Useful for driving the stream bridge without real pipes.
#[derive(Clone, Default)]
pub struct BytePipe {
    buf: Arc<Mutex<VecDeque<u8>>>,
}

impl BytePipe {
    pub fn new() -> Self {
        BytePipe::default()
    }
}

impl Read for BytePipe {
    fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
        let mut buf = self.buf.lock().unwrap();
        if buf.is_empty() {
            return Err(std::io::Error::new(std::io::ErrorKind::WouldBlock, "empty"));
        }
        let n = out.len().min(buf.len());
        for slot in out.iter_mut().take(n) {
            *slot = buf.pop_front().unwrap();
        }
        Ok(n)
    }
}

impl Write for BytePipe {
    fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
        self.buf.lock().unwrap().extend(data.iter().copied());
        Ok(data.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Connected pair of stream transports over two in-process byte pipes.
pub fn byte_pipe_pair() -> (
    StreamTransport<BytePipe, BytePipe>,
    StreamTransport<BytePipe, BytePipe>,
) {
    let a_to_b = BytePipe::new();
    let b_to_a = BytePipe::new();
    (
        StreamTransport::new(b_to_a.clone(), a_to_b.clone()),
        StreamTransport::new(a_to_b, b_to_a),
    )
}

/// File-mediated transport: appends outbound lines to one text file and
/// tails another, remembering the read offset so already-consumed lines
/// are not re-read. Replays caused by offset resets are the protocol
/// dedup's problem, not the transport's.
pub struct FileTailTransport {
    outbox: PathBuf,
    inbox: PathBuf,
    read_offset: u64,
}

impl FileTailTransport {
    pub fn new(outbox: PathBuf, inbox: PathBuf) -> Self {
        FileTailTransport { outbox, inbox, read_offset: 0 }
    }

    fn try_read_line(&mut self) -> Result<Option<String>> {
        let file = match std::fs::File::open(&self.inbox) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut reader = BufReader::new(file);
        reader.seek(SeekFrom::Start(self.read_offset))?;
        let mut line = String::new();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            // Nothing new, or a line still being written.
            return Ok(None);
        }
        self.read_offset += n as u64;
        Ok(Some(line))
    }
}

impl Transport for FileTailTransport {
    fn send(&mut self, line: &str) -> Result<()> {
        let mut file = OpenOptions::new().create(true).append(true).open(&self.outbox)?;
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(())
    }

    fn receive(&mut self, timeout_ms: u64) -> Result<Option<String>> {
        let deadline = Instant::now() + Duration::from_millis(timeout_ms);
        loop {
            if let Some(line) = self.try_read_line()? {
                return Ok(Some(line));
            }
            if Instant::now() >= deadline {
                return Ok(None);
            }
            std::thread::sleep(Duration::from_millis(1));
        }
    }
}

/// Fault-injection wrapper: every outbound line is delivered `copies`
/// times. Exercises the receiver-side duplicate suppression.
pub struct DuplicatingTransport<T: Transport> {
    inner: T,
    copies: u32,
}

impl<T: Transport> DuplicatingTransport<T> {
    pub fn new(inner: T, copies: u32) -> Self {
        assert!(copies >= 1);
        DuplicatingTransport { inner, copies }
    }
}

impl<T: Transport> Transport for DuplicatingTransport<T> {
    fn send(&mut self, line: &str) -> Result<()> {
        for _ in 0..self.copies {
            self.inner.send(line)?;
        }
        Ok(())
    }

    fn receive(&mut self, timeout_ms: u64) -> Result<Option<String>> {
        self.inner.receive(timeout_ms)
    }
}
