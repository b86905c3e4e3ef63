//! Length-prefixed TCP transport between the local prefix and the remote
//! suffix.
//!
//! A frame is a `u32` big-endian payload length followed by the payload.
//! Requests carry one serialized [`Bitstream`]. A successful response is
//!
//! ```text
//! class_count u16 BE | logits f32 LE x class_count | argmax u32 BE
//! ```
//!
//! and an error response is `0xFFFF u16 | code u16 | UTF-8 message`, with
//! codes from [`ErrorCode`]. Framing violations close the connection.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::codec::{decode, encode, Bitstream, CodecError, CodecModel};
use crate::model::{ModelError, ModelGraph, SplitPlan};
use crate::tensor::Tensor;

pub const MAX_FRAME: usize = 1 << 26;
pub const ERROR_MARKER: u16 = 0xFFFF;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte cap")]
    TooLarge(u64),
    #[error("stream ended inside a frame")]
    TruncatedStream,
    #[error("peer closed the connection")]
    ConnectionClosed,
    #[error("cannot connect: {0}")]
    ConnectionFailed(io::Error),
    #[error("server error {code:?}: {message}")]
    ServerError { code: ErrorCode, message: String },
    #[error("timed out waiting for the server")]
    Timeout,
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    ModelMismatch,
    CorruptPayload,
    BadBitstream,
    ShapeMismatch,
    WrongCut,
    Internal,
    Unknown(u16),
}

impl ErrorCode {
    pub fn to_u16(self) -> u16 {
        match self {
            Self::ModelMismatch => 1,
            Self::CorruptPayload => 2,
            Self::BadBitstream => 3,
            Self::ShapeMismatch => 4,
            Self::WrongCut => 5,
            Self::Internal => 6,
            Self::Unknown(c) => c,
        }
    }

    pub fn from_u16(c: u16) -> Self {
        match c {
            1 => Self::ModelMismatch,
            2 => Self::CorruptPayload,
            3 => Self::BadBitstream,
            4 => Self::ShapeMismatch,
            5 => Self::WrongCut,
            6 => Self::Internal,
            c => Self::Unknown(c),
        }
    }

    fn of_codec(e: &CodecError) -> Self {
        match e {
            CodecError::ModelMismatch { .. } => Self::ModelMismatch,
            CodecError::CorruptPayload(_) | CodecError::TrailingGarbage => Self::CorruptPayload,
            CodecError::ShapeMismatch(_) => Self::ShapeMismatch,
            CodecError::BadMagic | CodecError::VersionUnsupported(_) | CodecError::Truncated => Self::BadBitstream,
            _ => Self::Internal,
        }
    }
}

pub fn frame_write<W: Write>(payload: &[u8], out: &mut W) -> Result<(), TransportError> {
    if payload.len() > MAX_FRAME {
        return Err(TransportError::TooLarge(payload.len() as u64));
    }
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    buf.extend_from_slice(payload);
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Reads one frame. A stream that ends cleanly before the length prefix
/// gives [`TransportError::ConnectionClosed`].
pub fn frame_read<R: Read>(input: &mut R) -> Result<Vec<u8>, TransportError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match input.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(TransportError::ConnectionClosed),
            Ok(0) => return Err(TransportError::TruncatedStream),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(io_error(e)),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(TransportError::TooLarge(len as u64));
    }
    let mut payload = vec![0u8; len];
    input.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TransportError::TruncatedStream,
        _ => io_error(e),
    })?;
    Ok(payload)
}

fn io_error(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        _ => TransportError::Io(e),
    }
}

pub fn encode_logits(logits: &Tensor) -> Vec<u8> {
    let n = logits.len();
    let mut out = Vec::with_capacity(2 + 4 * n + 4);
    out.extend_from_slice(&(n as u16).to_be_bytes());
    for &v in logits.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(logits.argmax() as u32).to_be_bytes());
    out
}

pub fn encode_error(code: ErrorCode, message: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + message.len());
    out.extend_from_slice(&ERROR_MARKER.to_be_bytes());
    out.extend_from_slice(&code.to_u16().to_be_bytes());
    out.extend_from_slice(message.as_bytes());
    out
}

/// Parses a response payload into `(argmax, logits)`.
pub fn decode_response(payload: &[u8]) -> Result<(usize, Tensor), TransportError> {
    if payload.len() < 2 {
        return Err(TransportError::Protocol("response shorter than 2 bytes".into()));
    }
    let head = u16::from_be_bytes([payload[0], payload[1]]);
    if head == ERROR_MARKER {
        if payload.len() < 4 {
            return Err(TransportError::Protocol("short error frame".into()));
        }
        let code = ErrorCode::from_u16(u16::from_be_bytes([payload[2], payload[3]]));
        let message = String::from_utf8_lossy(&payload[4..]).into_owned();
        return Err(TransportError::ServerError { code, message });
    }
    let n = head as usize;
    if payload.len() != 2 + 4 * n + 4 {
        return Err(TransportError::Protocol(format!("{} bytes for {n} logits", payload.len())));
    }
    let logits =
        payload[2..2 + 4 * n].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let argmax = u32::from_be_bytes(payload[2 + 4 * n..].try_into().expect("4 bytes")) as usize;
    if argmax >= n.max(1) {
        return Err(TransportError::Protocol(format!("argmax {argmax} out of {n}")));
    }
    Ok((argmax, Tensor::new(vec![n], logits)?))
}

/// Immutable state shared by all connections: the suffix model and the
/// codec fitted at the served cut.
#[derive(Debug)]
pub struct ServerState {
    model: ModelGraph,
    codec: CodecModel,
    plan: SplitPlan,
}

impl ServerState {
    pub fn new(model: ModelGraph, codec: CodecModel, k: usize) -> Result<Self, TransportError> {
        let plan = SplitPlan::new(&model, k)?;
        let expected = model.shape_at(k).expect("plan validated");
        if codec.tensor_shape() != expected {
            return Err(CodecError::ShapeMismatch(format!(
                "codec fitted for {:?}, x_{k} is {expected:?}",
                codec.tensor_shape()
            ))
            .into());
        }
        Ok(Self { model, codec, plan })
    }

    /// Handles one request payload; every failure becomes an error frame.
    pub fn respond(&self, request: &[u8]) -> Vec<u8> {
        let result = Bitstream::from_bytes(request)
            .map_err(|e| (ErrorCode::of_codec(&e), e.to_string()))
            .and_then(|bs| {
                if bs.split_k as usize != self.plan.k() {
                    return Err((
                        ErrorCode::WrongCut,
                        format!("server runs cut {}, request is for {}", self.plan.k(), bs.split_k),
                    ));
                }
                decode(&self.codec, &bs).map_err(|e| (ErrorCode::of_codec(&e), e.to_string()))
            })
            .and_then(|x_k| {
                self.model.forward_suffix(&x_k, self.plan).map_err(|e| (ErrorCode::Internal, e.to_string()))
            });
        match result {
            Ok(logits) => encode_logits(&logits),
            Err((code, msg)) => encode_error(code, &msg),
        }
    }
}

fn handle_connection(state: &ServerState, mut stream: TcpStream) {
    while let Ok(req) = frame_read(&mut stream) {
        if frame_write(&state.respond(&req), &mut stream).is_err() {
            break;
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

/// A running server. Dropping the handle leaves the server running; call
/// [`ServerHandle::shutdown`] to stop accepting.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the accept loop. Connections already open finish on their own.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` and serves each connection on its own thread.
pub fn spawn_server(state: ServerState, addr: impl ToSocketAddrs) -> Result<ServerHandle, TransportError> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let state = Arc::new(state);
    let flag = stop.clone();
    let thread = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let _ = stream.set_nodelay(true);
            let state = state.clone();
            std::thread::spawn(move || handle_connection(&state, stream));
        }
    });
    Ok(ServerHandle { addr, stop, thread: Some(thread) })
}

/// Serves cut `k` on `0.0.0.0:port` until the process exits.
pub fn serve(model: ModelGraph, codec: CodecModel, k: usize, port: u16) -> Result<(), TransportError> {
    let handle = spawn_server(ServerState::new(model, codec, k)?, ("0.0.0.0", port))?;
    handle.join();
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteResult {
    pub label: usize,
    pub logits: Tensor,
    /// Request frame size: bitstream bytes plus the 4-byte length prefix.
    pub bytes_sent: usize,
}

/// Client side: a single connection that can carry many requests.
#[derive(Debug)]
pub struct RemoteClient {
    stream: TcpStream,
}

impl RemoteClient {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, TransportError> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing");
        for a in addr.to_socket_addrs().map_err(TransportError::ConnectionFailed)? {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    let _ = stream.set_nodelay(true);
                    return Ok(Self { stream });
                }
                Err(e) if e.kind() == io::ErrorKind::TimedOut => return Err(TransportError::Timeout),
                Err(e) => last = e,
            }
        }
        Err(TransportError::ConnectionFailed(last))
    }

    /// Runs the prefix locally, ships the encoded activation and waits for
    /// the logits.
    pub fn infer(
        &mut self,
        model: &ModelGraph,
        codec: &CodecModel,
        k: usize,
        image: &Tensor,
    ) -> Result<RemoteResult, TransportError> {
        let plan = SplitPlan::new(model, k)?;
        let x_k = model.forward_prefix(image, plan)?;
        let request = encode(codec, &x_k, k)?.to_bytes();
        self.send_raw(&request)
    }

    /// Sends an already serialized request payload.
    pub fn send_raw(&mut self, request: &[u8]) -> Result<RemoteResult, TransportError> {
        frame_write(request, &mut self.stream).map_err(|e| match e {
            TransportError::Io(e) => io_error(e),
            e => e,
        })?;
        let response = frame_read(&mut self.stream)?;
        let (label, logits) = decode_response(&response)?;
        Ok(RemoteResult { label, logits, bytes_sent: request.len() + 4 })
    }
}

/// One-shot remote inference over a fresh connection.
pub fn remote_infer(
    model: &ModelGraph,
    codec: &CodecModel,
    k: usize,
    addr: impl ToSocketAddrs,
    image: &Tensor,
    timeout: Duration,
) -> Result<RemoteResult, TransportError> {
    RemoteClient::connect(addr, timeout)?.infer(model, codec, k, image)
}
