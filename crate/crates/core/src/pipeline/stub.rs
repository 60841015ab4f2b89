//! In-process HTTP server speaking the remote backend's wire contract
//! (`POST {image, prompt}` → `{image}`), with scripted misbehaviours for
//! tests and offline runs.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::Deserialize;

use super::erase_marker;
use crate::geometry::PixelPoint;
use crate::marker::{detect_marker, HsvThresholds};
use crate::render::{draw_sphere_marker, RgbImage, BACKGROUND, MARKER_COLOR};

pub type Handler = Arc<dyn Fn(RgbImage, &str) -> RgbImage + Send + Sync>;

#[derive(Clone)]
pub enum StubMode {
    /// Return the request image unchanged.
    Echo,
    /// Return a blank image of a different size.
    Resize { width: u32, height: u32 },
    /// Reply 200 with a body that is not a valid document.
    Malformed,
    /// Reply with this HTTP status and an error body.
    Status(u16),
    /// Accept the connection and close it without replying.
    Drop,
    /// Move the marker found in the request image by (dx, dy) pixels.
    Offset { dx: f64, dy: f64 },
    /// Arbitrary image transformation.
    Custom(Handler),
}

impl std::fmt::Debug for StubMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StubMode::Echo => write!(f, "Echo"),
            StubMode::Resize { width, height } => write!(f, "Resize({width}x{height})"),
            StubMode::Malformed => write!(f, "Malformed"),
            StubMode::Status(s) => write!(f, "Status({s})"),
            StubMode::Drop => write!(f, "Drop"),
            StubMode::Offset { dx, dy } => write!(f, "Offset({dx}, {dy})"),
            StubMode::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Deserialize)]
struct Request {
    image: String,
    prompt: String,
}

#[derive(Default)]
struct Stats {
    requests: AtomicUsize,
    last_prompt: Mutex<Option<String>>,
}

pub struct StubServer {
    addr: SocketAddr,
    stats: Arc<Stats>,
    stop: Box<dyn Fn() + Send + Sync>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds to an ephemeral localhost port and starts serving.
    pub fn start(mode: StubMode) -> io::Result<Self> {
        Self::bind("127.0.0.1:0", mode)
    }

    pub fn bind(addr: &str, mode: StubMode) -> io::Result<Self> {
        let stats = Arc::new(Stats::default());
        if let StubMode::Drop = mode {
            return Self::start_dropping(addr, stats);
        }
        let server = Arc::new(tiny_http::Server::http(addr).map_err(io::Error::other)?);
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("stub server is not bound to an IP address"))?;
        let srv = Arc::clone(&server);
        let st = Arc::clone(&stats);
        let worker = std::thread::spawn(move || {
            for req in srv.incoming_requests() {
                st.requests.fetch_add(1, Ordering::SeqCst);
                if let Err(e) = serve(req, &mode, &st) {
                    log::warn!("stub server: {e}");
                }
            }
        });
        Ok(Self {
            addr: local,
            stats,
            stop: Box::new(move || server.unblock()),
            worker: Some(worker),
        })
    }

    fn start_dropping(addr: &str, stats: Arc<Stats>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let done = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&done);
        let st = Arc::clone(&stats);
        let worker = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = conn {
                    st.requests.fetch_add(1, Ordering::SeqCst);
                    drop(stream);
                }
            }
        });
        Ok(Self {
            addr: local,
            stats,
            stop: Box::new(move || {
                done.store(true, Ordering::SeqCst);
                let _ = TcpStream::connect(local);
            }),
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/ground", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }

    pub fn last_prompt(&self) -> Option<String> {
        self.stats.last_prompt.lock().ok()?.clone()
    }

    /// Stops accepting requests and joins the worker thread.
    pub fn shutdown(mut self) {
        self.stop_worker();
    }

    fn stop_worker(&mut self) {
        (self.stop)();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop_worker();
    }
}

fn json_response(status: u16, body: String) -> tiny_http::Response<io::Cursor<Vec<u8>>> {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(header)
}

fn serve(mut req: tiny_http::Request, mode: &StubMode, stats: &Stats) -> io::Result<()> {
    let mut body = String::new();
    req.as_reader().read_to_string(&mut body)?;
    let parsed: Request = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return req.respond(json_response(400, format!("{{\"error\":\"{e}\"}}"))),
    };
    if let Ok(mut p) = stats.last_prompt.lock() {
        *p = Some(parsed.prompt.clone());
    }
    let decoded = B64
        .decode(parsed.image.trim())
        .ok()
        .and_then(|bytes| RgbImage::decode_png(&bytes).ok());
    let Some(input) = decoded else {
        return req.respond(json_response(400, "{\"error\":\"bad image\"}".into()));
    };
    let output = match mode {
        StubMode::Echo => input,
        StubMode::Resize { width, height } => RgbImage::new(*width, *height, BACKGROUND),
        StubMode::Malformed => return req.respond(json_response(200, "{\"imag".into())),
        StubMode::Status(code) => {
            return req.respond(json_response(*code, "{\"error\":\"refused\"}".into()))
        }
        StubMode::Offset { dx, dy } => shift_marker(&input, *dx, *dy),
        StubMode::Custom(f) => f(input, &parsed.prompt),
        StubMode::Drop => unreachable!("drop mode uses a raw listener"),
    };
    let png = output.encode_png(&[]).map_err(io::Error::other)?;
    let reply = serde_json::json!({ "image": B64.encode(png) }).to_string();
    req.respond(json_response(200, reply))
}

/// Moves the marker of `img` by (dx, dy), keeping its size.
pub fn shift_marker(img: &RgbImage, dx: f64, dy: f64) -> RgbImage {
    let th = HsvThresholds::default();
    let Ok(det) = detect_marker(img, &th) else {
        return img.clone();
    };
    let mut out = erase_marker(img, &th);
    let radius = (det.area / std::f64::consts::PI).sqrt();
    let c = PixelPoint::new(det.center.u + dx, det.center.v + dy);
    draw_sphere_marker(&mut out, c, radius, MARKER_COLOR);
    out
}
