//! Framing for the out-of-process denoiser bridge.
//!
//! ```text
//! "TX4D" | u8 version | u8 type | u32 LE header length | JSON header
//!        | u64 LE payload length | payload
//! ```
//!
//! Request payloads carry the `K` latents followed by the `K` depth maps;
//! response payloads carry the `K` predictions. All tensors are C-order
//! little-endian float32, concatenated frame by frame.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::PredictionKind;

use super::{DenoiseRequest, DenoiseResponse, Denoiser, Handshake};

pub const MAGIC: [u8; 4] = *b"TX4D";
pub const VERSION: u8 = 1;
pub const MAX_HEADER_LEN: u32 = 1 << 20;
pub const MAX_PAYLOAD_LEN: u64 = 1 << 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    DenoiseReq = 2,
    DenoiseResp = 3,
    Error = 4,
}

impl TryFrom<u8> for MessageType {
    type Error = crate::error::Error;
    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::Hello,
            2 => Self::DenoiseReq,
            3 => Self::DenoiseResp,
            4 => Self::Error,
            other => return Err(Error::Protocol(format!("unknown message type {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageType,
    pub header: serde_json::Value,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(kind: MessageType, header: &impl Serialize, payload: Vec<u8>) -> Result<Self> {
        let header = serde_json::to_value(header).map_err(|e| Error::Protocol(e.to_string()))?;
        Ok(Self {
            kind,
            header,
            payload,
        })
    }

    pub fn header_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.header.clone())
            .map_err(|e| Error::Protocol(format!("bad header: {e}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("json value serializes");
        let mut out = Vec::with_capacity(18 + header.len() + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

fn io_error(e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Error::Timeout,
        io::ErrorKind::UnexpectedEof => Error::Protocol("connection closed mid-message".into()),
        _ => Error::Io(e),
    }
}

pub fn write_message(mut w: impl Write, msg: &Message) -> Result<()> {
    w.write_all(&msg.to_bytes()).map_err(io_error)?;
    w.flush().map_err(io_error)
}

/// Reads one message. `Ok(None)` means the peer closed the stream cleanly
/// before the first byte of a message.
pub fn read_message(mut r: impl Read) -> Result<Option<Message>> {
    let mut first = [0u8; 1];
    loop {
        match r.read(&mut first) {
            Ok(0) => return Ok(None),
            Ok(_) => break,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(io_error(e)),
        }
    }
    let mut fixed = [0u8; 9];
    r.read_exact(&mut fixed).map_err(io_error)?;
    let magic = [first[0], fixed[0], fixed[1], fixed[2]];
    if magic != MAGIC {
        return Err(Error::Protocol(format!("bad magic {magic:?}")));
    }
    if fixed[3] != VERSION {
        return Err(Error::Protocol(format!(
            "unsupported protocol version {}",
            fixed[3]
        )));
    }
    let kind = MessageType::try_from(fixed[4])?;
    let header_len = u32::from_le_bytes(fixed[5..9].try_into().unwrap());
    if header_len > MAX_HEADER_LEN {
        return Err(Error::Protocol(format!(
            "header length {header_len} too large"
        )));
    }
    let mut header = vec![0u8; header_len as usize];
    r.read_exact(&mut header).map_err(io_error)?;
    let header: serde_json::Value =
        serde_json::from_slice(&header).map_err(|e| Error::Protocol(format!("bad header: {e}")))?;
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io_error)?;
    let payload_len = u64::from_le_bytes(len);
    if payload_len > MAX_PAYLOAD_LEN {
        return Err(Error::Protocol(format!(
            "payload length {payload_len} too large"
        )));
    }
    let mut payload = vec![0u8; payload_len as usize];
    r.read_exact(&mut payload).map_err(io_error)?;
    Ok(Some(Message {
        kind,
        header,
        payload,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloHeader {
    pub role: String,
    pub version: u8,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub handshake: Option<Handshake>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestHeader {
    pub timestep: usize,
    #[serde(default)]
    pub train_timestep: usize,
    pub view_id: usize,
    pub frame_count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub prompt: String,
    #[serde(default)]
    pub prediction_kind: Option<PredictionKind>,
    pub dtype: String,
    #[serde(default)]
    pub background: bool,
    #[serde(default)]
    pub guidance: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHeader {
    pub kind: PredictionKind,
    pub frame_count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHeader {
    pub code: String,
    pub message: String,
}

pub fn hello(role: &str, handshake: Option<Handshake>) -> Result<Message> {
    Message::new(
        MessageType::Hello,
        &HelloHeader {
            role: role.into(),
            version: VERSION,
            handshake,
        },
        Vec::new(),
    )
}

pub fn error_message(code: &str, message: &str) -> Message {
    Message::new(
        MessageType::Error,
        &ErrorHeader {
            code: code.into(),
            message: message.into(),
        },
        Vec::new(),
    )
    .expect("error header serializes")
}

fn grids_to_bytes<'a>(grids: impl IntoIterator<Item = &'a Grid>) -> Vec<u8> {
    let mut out = Vec::new();
    for g in grids {
        out.extend_from_slice(&g.to_le_bytes());
    }
    out
}

fn split_grids(bytes: &[u8], count: usize, shape: (usize, usize, usize)) -> Result<Vec<Grid>> {
    let (c, h, w) = shape;
    let each = c * h * w * 4;
    (0..count)
        .map(|i| Grid::from_le_bytes(c, h, w, &bytes[i * each..(i + 1) * each]))
        .collect()
}

fn check_dtype(dtype: &str) -> Result<()> {
    if dtype != "f32" {
        return Err(Error::Protocol(format!("unsupported dtype {dtype:?}")));
    }
    Ok(())
}

fn expect_len(payload: &[u8], expected: usize) -> Result<()> {
    if payload.len() != expected {
        return Err(Error::Protocol(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    Ok(())
}

pub fn encode_request(req: &DenoiseRequest, expect: Option<PredictionKind>) -> Result<Message> {
    req.validate()?;
    let (c, h, w) = req.latent_shape();
    let header = RequestHeader {
        timestep: req.timestep,
        train_timestep: req.train_timestep,
        view_id: req.view_id,
        frame_count: req.frame_count(),
        channels: c,
        height: h,
        width: w,
        prompt: req.prompt.clone(),
        prediction_kind: expect,
        dtype: "f32".into(),
        background: req.background,
        guidance: req.guidance.clone(),
    };
    let payload = grids_to_bytes(req.latents.iter().chain(&req.depths));
    Message::new(MessageType::DenoiseReq, &header, payload)
}

pub fn decode_request(msg: &Message) -> Result<DenoiseRequest> {
    if msg.kind != MessageType::DenoiseReq {
        return Err(Error::Protocol(format!(
            "expected DENOISE_REQ, got {:?}",
            msg.kind
        )));
    }
    let h: RequestHeader = msg.header_as()?;
    check_dtype(&h.dtype)?;
    if h.frame_count == 0 {
        return Err(Error::Protocol("request with zero frames".into()));
    }
    let latent = h.channels * h.height * h.width * 4;
    let depth = h.height * h.width * 4;
    expect_len(&msg.payload, h.frame_count * (latent + depth))?;
    let (lat, dep) = msg.payload.split_at(h.frame_count * latent);
    Ok(DenoiseRequest {
        view_id: h.view_id,
        timestep: h.timestep,
        train_timestep: h.train_timestep,
        latents: split_grids(lat, h.frame_count, (h.channels, h.height, h.width))?,
        depths: split_grids(dep, h.frame_count, (1, h.height, h.width))?,
        prompt: h.prompt,
        guidance: h.guidance,
        background: h.background,
    })
}

pub fn encode_response(resp: &DenoiseResponse) -> Result<Message> {
    let (c, h, w) = resp.frames.first().map(Grid::shape).unwrap_or((0, 0, 0));
    if let Some(bad) = resp.frames.iter().find(|f| f.shape() != (c, h, w)) {
        return Err(Error::shape((c, h, w), bad.shape()));
    }
    let header = ResponseHeader {
        kind: resp.kind,
        frame_count: resp.frames.len(),
        channels: c,
        height: h,
        width: w,
        dtype: "f32".into(),
    };
    Message::new(
        MessageType::DenoiseResp,
        &header,
        grids_to_bytes(&resp.frames),
    )
}

pub fn decode_response(msg: &Message) -> Result<DenoiseResponse> {
    match msg.kind {
        MessageType::DenoiseResp => {}
        MessageType::Error => {
            let e: ErrorHeader = msg.header_as()?;
            return Err(Error::BackendUnavailable(format!(
                "{}: {}",
                e.code, e.message
            )));
        }
        other => {
            return Err(Error::Protocol(format!(
                "expected DENOISE_RESP, got {other:?}"
            )))
        }
    }
    let h: ResponseHeader = msg.header_as()?;
    check_dtype(&h.dtype)?;
    expect_len(
        &msg.payload,
        h.frame_count * h.channels * h.height * h.width * 4,
    )?;
    Ok(DenoiseResponse {
        kind: h.kind,
        frames: split_grids(&msg.payload, h.frame_count, (h.channels, h.height, h.width))?,
    })
}

/// Answers requests on one connection with `denoiser` until the peer closes
/// it. Malformed frames get an ERROR reply with code `bad-frame` and end the
/// connection; backend failures get code `backend` and the loop continues.
pub fn serve_connection(mut stream: impl Read + Write, denoiser: &dyn Denoiser) -> Result<()> {
    let handshake = denoiser.handshake()?;
    loop {
        let msg = match read_message(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => return Ok(()),
            Err(e @ (Error::Protocol(_) | Error::Parse(_))) => {
                let _ = write_message(&mut stream, &error_message("bad-frame", &e.to_string()));
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let reply = match msg.kind {
            MessageType::Hello => hello("server", Some(handshake.clone()))?,
            MessageType::DenoiseReq => match decode_request(&msg) {
                Ok(req) => match denoiser.denoise(&req).and_then(|r| {
                    if r.frames.iter().all(Grid::is_finite) {
                        Ok(r)
                    } else {
                        Err(Error::Protocol("non-finite prediction".into()))
                    }
                }) {
                    Ok(resp) => encode_response(&resp)?,
                    Err(e) => error_message("backend", &e.to_string()),
                },
                Err(e) => {
                    let _ = write_message(&mut stream, &error_message("bad-frame", &e.to_string()));
                    return Err(e);
                }
            },
            other => {
                let e = Error::Protocol(format!("unexpected {other:?} from client"));
                let _ = write_message(&mut stream, &error_message("bad-frame", &e.to_string()));
                return Err(e);
            }
        };
        write_message(&mut stream, &reply)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::tests::request;
    use crate::denoiser::EchoDenoiser;
    use std::io::Cursor;

    #[test]
    fn framing_layout() {
        let msg = hello("client", None).unwrap();
        let bytes = msg.to_bytes();
        assert_eq!(&bytes[..4], b"TX4D");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[10..10 + hlen]).unwrap();
        assert_eq!(header["role"], "client");
        let plen = u64::from_le_bytes(bytes[10 + hlen..18 + hlen].try_into().unwrap());
        assert_eq!(plen, 0);
        assert_eq!(bytes.len(), 18 + hlen);
    }

    #[test]
    fn request_roundtrip_is_bitwise() {
        let mut req = request(3, 4, 5, 6);
        req.depths[1].data_mut()[3] = f32::INFINITY;
        req.guidance.insert("scale".into(), serde_json::json!(7.5));
        let msg = encode_request(&req, Some(PredictionKind::V)).unwrap();
        let back = read_message(Cursor::new(msg.to_bytes())).unwrap().unwrap();
        assert_eq!(back, msg);
        assert_eq!(back.header["prediction_kind"], "v");
        assert_eq!(back.header["frame_count"], 3);
        assert_eq!(decode_request(&back).unwrap(), req);
    }

    #[test]
    fn payload_order_is_latents_then_depths() {
        let req = request(2, 1, 1, 2);
        let msg = encode_request(&req, None).unwrap();
        let f: Vec<f32> = msg
            .payload
            .chunks(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mut expect = Vec::new();
        for l in &req.latents {
            expect.extend_from_slice(l.data());
        }
        for d in &req.depths {
            expect.extend_from_slice(d.data());
        }
        assert_eq!(f, expect);
    }

    #[test]
    fn response_roundtrip() {
        let resp = DenoiseResponse {
            kind: PredictionKind::Epsilon,
            frames: request(2, 3, 2, 2).latents,
        };
        let msg = encode_response(&resp).unwrap();
        let back = read_message(Cursor::new(msg.to_bytes())).unwrap().unwrap();
        assert_eq!(decode_response(&back).unwrap(), resp);
    }

    #[test]
    fn malformed_frames_rejected() {
        let good = hello("x", None).unwrap().to_bytes();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            read_message(Cursor::new(bad_magic)),
            Err(Error::Protocol(_))
        ));
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(
            read_message(Cursor::new(bad_version)),
            Err(Error::Protocol(_))
        ));
        let mut bad_type = good.clone();
        bad_type[5] = 77;
        assert!(matches!(
            read_message(Cursor::new(bad_type)),
            Err(Error::Protocol(_))
        ));
        for cut in [3, 10, good.len() - 1] {
            assert!(matches!(
                read_message(Cursor::new(good[..cut].to_vec())),
                Err(Error::Protocol(_))
            ));
        }
        assert_eq!(read_message(Cursor::new(Vec::new())).unwrap(), None);
    }

    #[test]
    fn shape_inconsistent_payload_rejected() {
        let mut msg = encode_request(&request(1, 1, 2, 2), None).unwrap();
        msg.payload.truncate(msg.payload.len() - 4);
        assert!(matches!(decode_request(&msg), Err(Error::Protocol(_))));
    }

    #[test]
    fn error_reply_becomes_backend_unavailable() {
        let e = error_message("backend", "out of memory");
        assert!(
            matches!(decode_response(&e), Err(Error::BackendUnavailable(m)) if m.contains("out of memory"))
        );
    }

    /// In-memory duplex: reads from a prepared script, collects writes.
    struct Duplex {
        input: Cursor<Vec<u8>>,
        output: Vec<u8>,
    }
    impl Read for Duplex {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            self.input.read(buf)
        }
    }
    impl Write for Duplex {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.output.write(buf)
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn transcript_follows_grammar() {
        let req = request(2, 3, 4, 4);
        let mut script = hello("client", None).unwrap().to_bytes();
        script.extend(
            encode_request(&req, Some(PredictionKind::X0))
                .unwrap()
                .to_bytes(),
        );
        let mut io = Duplex {
            input: Cursor::new(script),
            output: Vec::new(),
        };
        serve_connection(&mut io, &EchoDenoiser).unwrap();
        let mut out = Cursor::new(io.output);
        let h = read_message(&mut out).unwrap().unwrap();
        assert_eq!(h.kind, MessageType::Hello);
        let hh: HelloHeader = h.header_as().unwrap();
        assert_eq!(hh.handshake.unwrap().kind, PredictionKind::X0);
        let r = read_message(&mut out).unwrap().unwrap();
        assert_eq!(decode_response(&r).unwrap().frames, req.latents);
        assert_eq!(read_message(&mut out).unwrap(), None);
    }

    #[test]
    fn truncated_request_gets_bad_frame() {
        let mut bytes = encode_request(&request(1, 1, 2, 2), None)
            .unwrap()
            .to_bytes();
        bytes.truncate(bytes.len() - 2);
        let mut io = Duplex {
            input: Cursor::new(bytes),
            output: Vec::new(),
        };
        assert!(serve_connection(&mut io, &EchoDenoiser).is_err());
        let e = read_message(Cursor::new(io.output)).unwrap().unwrap();
        assert_eq!(e.kind, MessageType::Error);
        assert_eq!(e.header_as::<ErrorHeader>().unwrap().code, "bad-frame");
    }
}
