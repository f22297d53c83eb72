//! Length-prefixed frames over an ordered, reliable, bidirectional link.
//!
//! Wire format: `u8 kind | u32 payload length (LE) | payload`, the payload
//! being packed 8-byte little-endian words. The encoding is identical for
//! the in-process and TCP transports.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use crate::field::{Fp, Fp2};
use crate::{Result, ZkError};

/// Largest accepted payload.
pub const MAX_FRAME: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    /// Public session parameters, prover to verifier.
    Hello = 1,
    /// The dealer's stream seed for the prover.
    DealerSeed = 2,
    /// Masked commitments `v - r` and Beaver openings `x - a`, `y - b`.
    Masked = 3,
    Challenge = 4,
    MacCheck = 5,
    /// The single plaintext value of a run: the verdict bit and its tag.
    Reveal = 6,
    Accept = 7,
    Abort = 8,
}

/// What a frame discloses to whoever reads it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Disclosure {
    Public,
    Dealer,
    Masked,
    MacCheck,
    Control,
    Plaintext,
}

impl FrameKind {
    pub fn from_u8(b: u8) -> Option<Self> {
        use FrameKind::*;
        Some(match b {
            1 => Hello,
            2 => DealerSeed,
            3 => Masked,
            4 => Challenge,
            5 => MacCheck,
            6 => Reveal,
            7 => Accept,
            8 => Abort,
            _ => return None,
        })
    }

    pub fn disclosure(self) -> Disclosure {
        match self {
            FrameKind::Hello | FrameKind::Challenge => Disclosure::Public,
            FrameKind::DealerSeed => Disclosure::Dealer,
            FrameKind::Masked => Disclosure::Masked,
            FrameKind::MacCheck => Disclosure::MacCheck,
            FrameKind::Reveal => Disclosure::Plaintext,
            FrameKind::Accept | FrameKind::Abort => Disclosure::Control,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameKind, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn from_words(kind: FrameKind, words: &[u64]) -> Self {
        Frame::new(kind, words.iter().flat_map(|w| w.to_le_bytes()).collect())
    }

    pub fn from_elems(kind: FrameKind, elems: &[Fp]) -> Self {
        Frame::new(kind, elems.iter().flat_map(|e| e.to_le_bytes()).collect())
    }

    pub fn from_ext(kind: FrameKind, elems: &[Fp2]) -> Self {
        Frame::new(kind, elems.iter().flat_map(|e| e.to_le_bytes()).collect())
    }

    pub fn words(&self) -> Result<Vec<u64>> {
        if !self.payload.len().is_multiple_of(8) {
            return Err(ZkError::Protocol(format!("{:?} payload of {} bytes", self.kind, self.payload.len())));
        }
        Ok(self
            .payload
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn elems(&self) -> Result<Vec<Fp>> {
        self.words()?
            .into_iter()
            .map(|w| {
                Fp::from_le_bytes(w.to_le_bytes()).ok_or_else(|| ZkError::Protocol("non-canonical field element".into()))
            })
            .collect()
    }

    pub fn ext_elems(&self) -> Result<Vec<Fp2>> {
        let e = self.elems()?;
        if e.len() % 2 != 0 {
            return Err(ZkError::Protocol("odd extension payload".into()));
        }
        Ok(e.chunks_exact(2).map(|c| Fp2::new(c[0], c[1])).collect())
    }

    /// Bytes on the wire including the 5-byte header.
    pub fn wire_len(&self) -> usize {
        5 + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame> {
        let mut head = [0u8; 5];
        r.read_exact(&mut head)?;
        let kind = FrameKind::from_u8(head[0]).ok_or_else(|| ZkError::Protocol(format!("unknown frame kind {}", head[0])))?;
        let len = u32::from_le_bytes(head[1..].try_into().expect("4 bytes")) as usize;
        if len > MAX_FRAME {
            return Err(ZkError::Protocol(format!("frame of {len} bytes exceeds the limit")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Frame { kind, payload })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Traffic {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
}

pub trait Channel: Send {
    fn send(&mut self, frame: &Frame) -> Result<()>;
    fn recv(&mut self) -> Result<Frame>;
    fn flush(&mut self) -> Result<()>;
    fn traffic(&self) -> Traffic;
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        (**self).send(frame)
    }
    fn recv(&mut self) -> Result<Frame> {
        (**self).recv()
    }
    fn flush(&mut self) -> Result<()> {
        (**self).flush()
    }
    fn traffic(&self) -> Traffic {
        (**self).traffic()
    }
}

/// In-process channel carrying encoded frames.
pub struct MemChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    traffic: Traffic,
}

impl MemChannel {
    pub fn pair() -> (MemChannel, MemChannel) {
        let (t1, r1) = channel();
        let (t2, r2) = channel();
        (
            MemChannel { tx: t1, rx: r2, traffic: Traffic::default() },
            MemChannel { tx: t2, rx: r1, traffic: Traffic::default() },
        )
    }
}

impl Channel for MemChannel {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        self.traffic.bytes_sent += bytes.len() as u64;
        self.traffic.frames_sent += 1;
        self.tx.send(bytes).map_err(|_| ZkError::Transport("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Frame> {
        let bytes = self.rx.recv().map_err(|_| ZkError::Transport("peer hung up".into()))?;
        self.traffic.bytes_received += bytes.len() as u64;
        self.traffic.frames_received += 1;
        Frame::read_from(&mut bytes.as_slice())
    }

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    fn traffic(&self) -> Traffic {
        self.traffic
    }
}

pub struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    traffic: Traffic,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
        let writer = BufWriter::with_capacity(1 << 16, stream);
        Ok(TcpChannel { reader, writer, traffic: Traffic::default() })
    }

    pub fn connect(addr: &str) -> Result<Self> {
        TcpChannel::new(TcpStream::connect(addr)?)
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        self.writer.write_all(&bytes)?;
        self.traffic.bytes_sent += bytes.len() as u64;
        self.traffic.frames_sent += 1;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        self.writer.flush()?;
        let f = Frame::read_from(&mut self.reader)?;
        self.traffic.bytes_received += f.wire_len() as u64;
        self.traffic.frames_received += 1;
        Ok(f)
    }

    fn flush(&mut self) -> Result<()> {
        Ok(self.writer.flush()?)
    }

    fn traffic(&self) -> Traffic {
        self.traffic
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub kind: FrameKind,
    pub len: usize,
    /// Payload of plaintext-class frames only.
    pub plaintext: Option<Vec<u8>>,
}

pub type Transcript = Arc<Mutex<Vec<TranscriptEntry>>>;

/// Logs the kind and size of every frame passing through `inner`.
pub struct Recording<C> {
    inner: C,
    log: Transcript,
}

impl<C: Channel> Recording<C> {
    pub fn new(inner: C) -> (Self, Transcript) {
        let log = Transcript::default();
        (Recording { inner, log: log.clone() }, log)
    }

    fn record(&self, direction: Direction, f: &Frame) {
        let plaintext = (f.kind.disclosure() == Disclosure::Plaintext).then(|| f.payload.clone());
        self.log
            .lock()
            .expect("transcript lock")
            .push(TranscriptEntry { direction, kind: f.kind, len: f.payload.len(), plaintext });
    }
}

impl<C: Channel> Channel for Recording<C> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.record(Direction::Sent, frame);
        self.inner.send(frame)
    }

    fn recv(&mut self) -> Result<Frame> {
        let f = self.inner.recv()?;
        self.record(Direction::Received, &f);
        Ok(f)
    }

    fn flush(&mut self) -> Result<()> {
        self.inner.flush()
    }

    fn traffic(&self) -> Traffic {
        self.inner.traffic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn encode_decode_round_trip() {
        let f = Frame::from_elems(FrameKind::Masked, &[Fp::new(1), Fp::new(crate::field::MODULUS - 1)]);
        let bytes = f.encode();
        assert_eq!(bytes[0], 3);
        assert_eq!(u32::from_le_bytes(bytes[1..5].try_into().unwrap()), 16);
        let g = Frame::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(g, f);
        assert_eq!(g.elems().unwrap(), vec![Fp::new(1), Fp::new(crate::field::MODULUS - 1)]);
    }

    #[test]
    fn malformed_frames_are_rejected() {
        assert!(Frame::read_from(&mut [9u8, 0, 0, 0, 0].as_slice()).is_err());
        assert!(Frame::read_from(&mut [3u8, 8, 0, 0].as_slice()).is_err());
        let f = Frame::new(FrameKind::Masked, vec![0xff; 8]);
        assert!(f.elems().is_err());
        assert!(Frame::new(FrameKind::Masked, vec![0; 7]).words().is_err());
    }

    #[test]
    fn mem_channel_counts_bytes() {
        let (mut a, mut b) = MemChannel::pair();
        a.send(&Frame::from_words(FrameKind::Hello, &[1, 2])).unwrap();
        let f = b.recv().unwrap();
        assert_eq!(f.words().unwrap(), vec![1, 2]);
        assert_eq!(a.traffic().bytes_sent, 21);
        assert_eq!(b.traffic().bytes_received, 21);
        drop(a);
        assert!(matches!(b.recv(), Err(ZkError::Transport(_))));
    }

    #[test]
    fn tcp_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let h = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut c = TcpChannel::new(s).unwrap();
            let f = c.recv().unwrap();
            c.send(&f).unwrap();
            c.flush().unwrap();
        });
        let mut c = TcpChannel::connect(&addr).unwrap();
        let f = Frame::from_words(FrameKind::Challenge, &[7, 8]);
        c.send(&f).unwrap();
        assert_eq!(c.recv().unwrap(), f);
        h.join().unwrap();
    }
}
