mod common;

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use common::*;
use uvsync::denoiser::protocol::{read_message, serve_connection, ErrorHeader, MessageType};
use uvsync::denoiser::{
    DenoiseRequest, DenoiseResponse, Denoiser, Handshake, RemoteDenoiser, RemoteOptions,
};
use uvsync::geometry::primitives;
use uvsync::grid::Grid;
use uvsync::pipeline::{generate, PipelineConfig};
use uvsync::schedule::PredictionKind;
use uvsync::{Error, Result};

/// Epsilon-prediction backend that depends on the latent, the depth and the
/// timestep.
struct Toy;

impl Denoiser for Toy {
    fn handshake(&self) -> Result<Handshake> {
        Ok(Handshake {
            kind: PredictionKind::Epsilon,
            concurrent: true,
            channels: None,
            name: "toy".into(),
        })
    }
    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse> {
        let s = req.timestep as f32 / 100.0;
        let frames = req
            .latents
            .iter()
            .zip(&req.depths)
            .map(|(z, d)| {
                Grid::from_fn(z.channels(), z.height(), z.width(), |c, y, x| {
                    let depth = d.get(0, y, x);
                    let near = if depth.is_finite() {
                        1.0 / (1.0 + depth)
                    } else {
                        0.0
                    };
                    0.6 * z.get(c, y, x) + 0.1 * (z.get(c, y, x) * 3.0).sin() + s * near
                })
            })
            .collect();
        Ok(DenoiseResponse {
            kind: PredictionKind::Epsilon,
            frames,
        })
    }
}

fn spawn_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            thread::spawn(move || {
                let _ = serve_connection(stream, &Toy);
            });
        }
    });
    addr
}

#[test]
fn remote_backend_reproduces_in_process_run() {
    let addr = spawn_server();
    let remote = RemoteDenoiser::connect(&addr, RemoteOptions::default()).unwrap();
    assert_eq!(remote.handshake().unwrap(), Toy.handshake().unwrap());

    let meshes = primitives::uv_sphere(0.6, 16, 8);
    let rig = ring(2, 2.5, 30.0, 24);
    let cfg = PipelineConfig {
        steps: 6,
        latent_resolution: 24,
        uv_resolution: 48,
        ..PipelineConfig::default()
    };
    let local = generate(&meshes, &rig, &cfg, &Toy).unwrap();
    let over_wire = generate(&meshes, &rig, &cfg, &remote).unwrap();
    for (a, b) in local.keyframes.iter().zip(&over_wire.keyframes) {
        assert!(a.max_abs_diff(b).unwrap() <= 1e-6);
    }
}

#[test]
fn garbage_gets_a_bad_frame_error() {
    let addr = spawn_server();
    let mut s = TcpStream::connect(&addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    s.write_all(b"NOPE\x01\x02\x00\x00\x00\x00").unwrap();
    let reply = read_message(&mut s).unwrap().unwrap();
    assert_eq!(reply.kind, MessageType::Error);
    let h: ErrorHeader = reply.header_as().unwrap();
    assert_eq!(h.code, "bad-frame");
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let hold = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        thread::sleep(Duration::from_millis(800));
        drop(stream);
    });
    let opts = RemoteOptions {
        io_timeout: Duration::from_millis(200),
        ..RemoteOptions::default()
    };
    let err = RemoteDenoiser::connect(&addr, opts).unwrap_err();
    assert!(matches!(err, Error::Timeout), "{err:?}");
    hold.join().unwrap();
}
