//! Binary lockstep protocol for running the two halves as two processes.
//!
//! Frame layout: magic "TDCS", version byte, message-type byte, u32 LE
//! sequence, u16 LE payload length, then packed f64 LE fields. Sequence
//! numbers count from 0 independently per direction and must advance by
//! exactly one per frame. The exchange is blocking and strictly
//! alternating, so simulated results cannot depend on transport timing; a
//! session transports every float bit-exactly, which keeps a two-process
//! run identical to the in-process loop.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use crate::config::ScenarioConfig;
use crate::cosim::{CosimError, DxSide, TxExchange, TxSide};
use crate::trace::RunTrace;
use crate::transmission::FeedbackPowers;

pub const MAGIC: [u8; 4] = *b"TDCS";
pub const VERSION: u8 = 0x01;

const HEADER_LEN: usize = 12;

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Msg {
    Handshake {
        t_t: f64,
        t_d: f64,
        duration: f64,
    },
    TxToDx {
        t: f64,
        v_mag: f64,
        theta: f64,
        p_sfr_request_kw: f64,
    },
    DxToTx {
        t: f64,
        p_kw: f64,
        q_kvar: f64,
        p_avail_kw: f64,
    },
    End {
        t: f64,
    },
}

impl Msg {
    /// (type byte, field buffer, field count).
    fn packed(&self) -> (u8, [f64; 4], usize) {
        match *self {
            Msg::Handshake { t_t, t_d, duration } => (0x01, [t_t, t_d, duration, 0.0], 3),
            Msg::TxToDx {
                t,
                v_mag,
                theta,
                p_sfr_request_kw,
            } => (0x02, [t, v_mag, theta, p_sfr_request_kw], 4),
            Msg::DxToTx {
                t,
                p_kw,
                q_kvar,
                p_avail_kw,
            } => (0x03, [t, p_kw, q_kvar, p_avail_kw], 4),
            Msg::End { t } => (0x04, [t, 0.0, 0.0, 0.0], 1),
        }
    }

    fn field_count(msg_type: u8) -> Option<usize> {
        match msg_type {
            0x01 => Some(3),
            0x02 | 0x03 => Some(4),
            0x04 => Some(1),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum WireError {
    BadMagic([u8; 4]),
    BadVersion(u8),
    UnknownType(u8),
    LengthMismatch { msg_type: u8, payload_len: u16 },
    /// Sequence gap or regression: frames must advance by exactly one.
    BadSeq { expected: u32, got: u32 },
    HandshakeMismatch(String),
    /// The session expected a different message or timestamp here.
    Desync(String),
    /// Peer closed the connection mid-session.
    Disconnected,
    Io(io::Error),
    Sim(CosimError),
}

impl std::fmt::Display for WireError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WireError::BadMagic(m) => write!(f, "bad frame magic {m:02x?}"),
            WireError::BadVersion(v) => write!(f, "unsupported protocol version {v:#04x}"),
            WireError::UnknownType(t) => write!(f, "unknown message type {t:#04x}"),
            WireError::LengthMismatch {
                msg_type,
                payload_len,
            } => write!(
                f,
                "payload length {payload_len} invalid for message type {msg_type:#04x}"
            ),
            WireError::BadSeq { expected, got } => {
                write!(f, "sequence break: expected {expected}, got {got}")
            }
            WireError::HandshakeMismatch(why) => write!(f, "handshake rejected: {why}"),
            WireError::Desync(why) => write!(f, "lockstep desync: {why}"),
            WireError::Disconnected => write!(f, "peer disconnected mid-session"),
            WireError::Io(e) => write!(f, "transport: {e}"),
            WireError::Sim(e) => write!(f, "simulation: {e}"),
        }
    }
}

impl std::error::Error for WireError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            WireError::Io(e) => Some(e),
            WireError::Sim(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for WireError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::UnexpectedEof
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::BrokenPipe => WireError::Disconnected,
            _ => WireError::Io(e),
        }
    }
}

/// A failed session still surrenders the rows simulated so far.
#[derive(Debug)]
pub struct WireFailure {
    pub error: WireError,
    pub partial: RunTrace,
}

impl std::fmt::Display for WireFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for WireFailure {}

// ---------------------------------------------------------------------------
// Codec
// ---------------------------------------------------------------------------

pub fn encode(msg: &Msg, seq: u32) -> Vec<u8> {
    let (msg_type, fields, n) = msg.packed();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * n);
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.push(msg_type);
    buf.extend_from_slice(&seq.to_le_bytes());
    buf.extend_from_slice(&((8 * n) as u16).to_le_bytes());
    for field in &fields[..n] {
        buf.extend_from_slice(&field.to_le_bytes());
    }
    buf
}

pub fn decode(frame: &[u8]) -> Result<(Msg, u32), WireError> {
    if frame.len() < HEADER_LEN {
        return Err(WireError::LengthMismatch {
            msg_type: 0,
            payload_len: frame.len() as u16,
        });
    }
    if frame[0..4] != MAGIC {
        return Err(WireError::BadMagic([frame[0], frame[1], frame[2], frame[3]]));
    }
    if frame[4] != VERSION {
        return Err(WireError::BadVersion(frame[4]));
    }
    let msg_type = frame[5];
    let seq = u32::from_le_bytes(frame[6..10].try_into().unwrap());
    let payload_len = u16::from_le_bytes(frame[10..12].try_into().unwrap());
    let n = Msg::field_count(msg_type).ok_or(WireError::UnknownType(msg_type))?;
    if payload_len as usize != 8 * n || frame.len() != HEADER_LEN + 8 * n {
        return Err(WireError::LengthMismatch {
            msg_type,
            payload_len,
        });
    }
    let mut fields = [0.0f64; 4];
    for (i, field) in fields.iter_mut().take(n).enumerate() {
        let at = HEADER_LEN + 8 * i;
        *field = f64::from_le_bytes(frame[at..at + 8].try_into().unwrap());
    }
    let msg = match msg_type {
        0x01 => Msg::Handshake {
            t_t: fields[0],
            t_d: fields[1],
            duration: fields[2],
        },
        0x02 => Msg::TxToDx {
            t: fields[0],
            v_mag: fields[1],
            theta: fields[2],
            p_sfr_request_kw: fields[3],
        },
        0x03 => Msg::DxToTx {
            t: fields[0],
            p_kw: fields[1],
            q_kvar: fields[2],
            p_avail_kw: fields[3],
        },
        0x04 => Msg::End { t: fields[0] },
        _ => unreachable!("field_count filtered unknown types"),
    };
    Ok((msg, seq))
}

// ---------------------------------------------------------------------------
// Framed stream endpoints
// ---------------------------------------------------------------------------

pub struct FrameWriter<W: Write> {
    inner: W,
    next_seq: u32,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(inner: W) -> Self {
        FrameWriter { inner, next_seq: 0 }
    }

    pub fn send(&mut self, msg: &Msg) -> Result<(), WireError> {
        let frame = encode(msg, self.next_seq);
        self.inner.write_all(&frame)?;
        self.inner.flush()?;
        self.next_seq = self.next_seq.wrapping_add(1);
        Ok(())
    }
}

pub struct FrameReader<R: Read> {
    inner: R,
    next_seq: u32,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader { inner, next_seq: 0 }
    }

    pub fn recv(&mut self) -> Result<Msg, WireError> {
        let mut header = [0u8; HEADER_LEN];
        self.inner.read_exact(&mut header)?;
        let payload_len = u16::from_le_bytes(header[10..12].try_into().unwrap()) as usize;
        if payload_len > 32 {
            return Err(WireError::LengthMismatch {
                msg_type: header[5],
                payload_len: payload_len as u16,
            });
        }
        let mut frame = [0u8; HEADER_LEN + 32];
        frame[..HEADER_LEN].copy_from_slice(&header);
        self.inner
            .read_exact(&mut frame[HEADER_LEN..HEADER_LEN + payload_len])?;
        let (msg, seq) = decode(&frame[..HEADER_LEN + payload_len])?;
        if seq != self.next_seq {
            return Err(WireError::BadSeq {
                expected: self.next_seq,
                got: seq,
            });
        }
        self.next_seq = self.next_seq.wrapping_add(1);
        Ok(msg)
    }
}

// ---------------------------------------------------------------------------
// Session loops
// ---------------------------------------------------------------------------

// Negated comparisons so NaN timesteps from the peer fail validation.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_handshake(config: &ScenarioConfig, peer: &Msg) -> Result<(), WireError> {
    let (t_t, t_d, duration) = match *peer {
        Msg::Handshake { t_t, t_d, duration } => (t_t, t_d, duration),
        _ => return Err(WireError::Desync("expected handshake first".into())),
    };
    if !(t_d > 0.0) || !(t_t >= t_d) {
        return Err(WireError::HandshakeMismatch(format!(
            "bad timesteps t_t={t_t} t_d={t_d}"
        )));
    }
    let ratio = t_t / t_d;
    if (ratio - ratio.round()).abs() > 1e-6 * ratio.round().max(1.0) {
        return Err(WireError::HandshakeMismatch(format!(
            "t_t/t_d = {ratio} is not an integer"
        )));
    }
    let ts = &config.timesteps;
    if t_t != ts.t_t || t_d != ts.t_d || duration != ts.duration {
        return Err(WireError::HandshakeMismatch(format!(
            "peer runs ({t_t}, {t_d}, {duration}), local ({}, {}, {})",
            ts.t_t, ts.t_d, ts.duration
        )));
    }
    Ok(())
}

fn own_handshake(config: &ScenarioConfig) -> Msg {
    Msg::Handshake {
        t_t: config.timesteps.t_t,
        t_d: config.timesteps.t_d,
        duration: config.timesteps.duration,
    }
}

/// Transmission node: accepts one peer on `listener`, then drives the
/// coarse loop. Returns the coarse half of the trace.
pub fn run_tx_node_on(
    listener: TcpListener,
    config: &ScenarioConfig,
) -> Result<RunTrace, WireFailure> {
    let mut trace = RunTrace::default();
    match tx_session(listener, config, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(WireFailure {
            error,
            partial: trace,
        }),
    }
}

pub fn run_tx_node(config: &ScenarioConfig, addr: impl ToSocketAddrs) -> Result<RunTrace, WireFailure> {
    match TcpListener::bind(addr) {
        Ok(listener) => run_tx_node_on(listener, config),
        Err(e) => Err(WireFailure {
            error: WireError::Io(e),
            partial: RunTrace::default(),
        }),
    }
}

fn tx_session(
    listener: TcpListener,
    config: &ScenarioConfig,
    trace: &mut RunTrace,
) -> Result<(), WireError> {
    config
        .validate()
        .map_err(|e| WireError::Sim(CosimError::Config(e)))?;
    let (stream, _) = listener.accept()?;
    let mut writer = FrameWriter::new(stream.try_clone()?);
    let mut reader = FrameReader::new(stream);

    writer.send(&own_handshake(config))?;
    let peer = reader.recv()?;
    check_handshake(config, &peer)?;

    let t_t = config.timesteps.t_t;
    let n = config.n_coarse();
    let mut tx_side = TxSide::from_config(config);
    for k in 0..n {
        let t = k as f64 * t_t;
        let (msg, row) = tx_side
            .exchange(t)
            .map_err(|e| WireError::Sim(CosimError::Tx(e)))?;
        writer.send(&Msg::TxToDx {
            t: msg.t,
            v_mag: msg.v_mag,
            theta: msg.theta,
            p_sfr_request_kw: msg.p_sfr_request_kw,
        })?;
        trace.coarse.push(row);
        match reader.recv()? {
            Msg::DxToTx {
                t: t_reply,
                p_kw,
                q_kvar,
                p_avail_kw,
            } => {
                if t_reply != t {
                    return Err(WireError::Desync(format!(
                        "reply for t={t_reply}, expected t={t}"
                    )));
                }
                tx_side.absorb_feedback(FeedbackPowers {
                    p_kw,
                    q_kvar,
                    p_avail_kw,
                });
            }
            other => {
                return Err(WireError::Desync(format!(
                    "expected feedback at t={t}, got {other:?}"
                )))
            }
        }
    }
    writer.send(&Msg::End {
        t: n as f64 * t_t,
    })?;
    match reader.recv()? {
        Msg::End { .. } => Ok(()),
        other => Err(WireError::Desync(format!(
            "expected end acknowledgement, got {other:?}"
        ))),
    }
}

/// Distribution node: connects to the transmission node and serves fine
/// steps until `End`. Returns the fine half of the trace.
pub fn run_dx_node(
    config: &ScenarioConfig,
    addr: impl ToSocketAddrs,
) -> Result<RunTrace, WireFailure> {
    let mut trace = RunTrace::default();
    match dx_session(config, addr, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(WireFailure {
            error,
            partial: trace,
        }),
    }
}

fn dx_session(
    config: &ScenarioConfig,
    addr: impl ToSocketAddrs,
    trace: &mut RunTrace,
) -> Result<(), WireError> {
    config
        .validate()
        .map_err(|e| WireError::Sim(CosimError::Config(e)))?;
    let stream = TcpStream::connect(addr)?;
    let mut writer = FrameWriter::new(stream.try_clone()?);
    let mut reader = FrameReader::new(stream);

    writer.send(&own_handshake(config))?;
    let peer = reader.recv()?;
    check_handshake(config, &peer)?;

    let t_t = config.timesteps.t_t;
    let mut dx_side = DxSide::from_config(config);
    let mut k: usize = 0;
    loop {
        match reader.recv()? {
            Msg::TxToDx {
                t,
                v_mag,
                theta,
                p_sfr_request_kw,
            } => {
                let expected_t = k as f64 * t_t;
                if t != expected_t {
                    return Err(WireError::Desync(format!(
                        "boundary at t={t}, expected t={expected_t}"
                    )));
                }
                let feedback = dx_side
                    .process_exchange(
                        TxExchange {
                            t,
                            v_mag,
                            theta,
                            p_sfr_request_kw,
                        },
                        trace,
                    )
                    .map_err(|e| WireError::Sim(CosimError::Extrap(e)))?;
                writer.send(&Msg::DxToTx {
                    t,
                    p_kw: feedback.p_kw,
                    q_kvar: feedback.q_kvar,
                    p_avail_kw: feedback.p_avail_kw,
                })?;
                k += 1;
            }
            Msg::End { t } => {
                writer.send(&Msg::End { t })?;
                return Ok(());
            }
            other => {
                return Err(WireError::Desync(format!(
                    "unexpected message {other:?} at step {k}"
                )))
            }
        }
    }
}

// ---------------------------------------------------------------------------
