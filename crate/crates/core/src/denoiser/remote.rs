use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};

use super::protocol::{
    decode_response, encode_request, hello, read_message, write_message, HelloHeader, MessageType,
};
use super::{DenoiseRequest, DenoiseResponse, Denoiser, Handshake};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemoteOptions {
    pub connect_timeout: Duration,
    /// Applies to every read and write on the connection.
    pub io_timeout: Duration,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            connect_timeout: Duration::from_secs(10),
            io_timeout: Duration::from_secs(600),
        }
    }
}

/// Client side of the bridge protocol. One request is in flight at a time
/// per connection.
#[derive(Debug)]
pub struct RemoteDenoiser {
    stream: Mutex<TcpStream>,
    handshake: Handshake,
}

impl RemoteDenoiser {
    pub fn connect(address: &str, opts: RemoteOptions) -> Result<Self> {
        let addrs: Vec<_> = address
            .to_socket_addrs()
            .map_err(|e| Error::BackendUnavailable(format!("{address}: {e}")))?
            .collect();
        let mut last = None;
        let mut stream = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, opts.connect_timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let mut stream = stream.ok_or_else(|| {
            Error::BackendUnavailable(format!(
                "{address}: {}",
                last.map(|e| e.to_string())
                    .unwrap_or_else(|| "no addresses".into())
            ))
        })?;
        stream.set_read_timeout(Some(opts.io_timeout))?;
        stream.set_write_timeout(Some(opts.io_timeout))?;
        stream.set_nodelay(true)?;

        write_message(&mut stream, &hello("client", None)?)?;
        let reply = read_message(&mut stream)?
            .ok_or_else(|| Error::Protocol("server closed during handshake".into()))?;
        if reply.kind == MessageType::Error {
            decode_response(&reply)?;
        }
        if reply.kind != MessageType::Hello {
            return Err(Error::Protocol(format!(
                "expected HELLO, got {:?}",
                reply.kind
            )));
        }
        let h: HelloHeader = reply.header_as()?;
        let handshake = h
            .handshake
            .ok_or_else(|| Error::Protocol("server HELLO lacks a prediction kind".into()))?;
        Ok(Self {
            stream: Mutex::new(stream),
            handshake,
        })
    }
}

impl Denoiser for RemoteDenoiser {
    fn handshake(&self) -> Result<Handshake> {
        Ok(self.handshake.clone())
    }

    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse> {
        let msg = encode_request(req, Some(self.handshake.kind))?;
        let mut stream = self.stream.lock().map_err(|_| {
            Error::BackendUnavailable("connection poisoned by an earlier failure".into())
        })?;
        write_message(&mut *stream, &msg)?;
        let reply = read_message(&mut *stream)?
            .ok_or_else(|| Error::Protocol("server closed the connection".into()))?;
        decode_response(&reply)
    }
}
