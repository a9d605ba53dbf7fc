#![allow(dead_code)]

pub mod oracles;

use cgvm_core::imaging::{ImagePlane, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random 8-bit plane with some spatial structure, so windows are not pure noise.
pub fn random_plane(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImagePlane<f64> {
    let (fx, fy, amp) = (rng.random_range(0.05..0.4), rng.random_range(0.05..0.4), rng.random_range(20.0..100.0));
    let base = rng.random_range(60.0..190.0);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.random_range(-40.0..40.0)).collect();
    ImagePlane::from_fn(w, h, |x, y| (base + amp * (fx * x as f64).sin() * (fy * y as f64).cos() + noise[y * w + x]).round())
}

/// A related pair: `b` is `a` plus noise and a brightness shift.
pub fn random_pair(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (ImagePlane<f64>, ImagePlane<f64>) {
    let a = random_plane(rng, w, h);
    let shift = rng.random_range(-30.0..30.0);
    let sigma = rng.random_range(1.0..60.0);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.random_range(-sigma..sigma)).collect();
    let b = ImagePlane::from_fn(w, h, |x, y| (a.get(x, y) + shift + noise[y * w + x]).round());
    (a, b)
}

pub fn random_rgb(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixtures() -> PathBuf {
    workspace_root().join("fixtures")
}

/// Copies a directory tree.
pub fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// A request seen by [`MockServer`].
#[derive(Clone, Debug)]
pub struct Seen {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

/// Local HTTP server answering from a handler; records every request.
pub struct MockServer {
    pub base: String,
    pub seen: std::sync::Arc<std::sync::Mutex<Vec<Seen>>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &Seen) -> (u16, Vec<u8>) + Send + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let base = format!("http://{}", server.server_addr().to_ip().unwrap());
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let mut body = Vec::new();
                req.as_reader().read_to_end(&mut body).unwrap();
                let s = Seen {
                    url: req.url().to_string(),
                    headers: req.headers().iter().map(|h| (h.field.to_string(), h.value.to_string())).collect(),
                    body,
                };
                let n = {
                    let mut l = log.lock().unwrap();
                    l.push(s.clone());
                    l.len() - 1
                };
                let (status, out) = handler(n, &s);
                let _ = req.respond(tiny_http::Response::from_data(out).with_status_code(status));
            }
        });
        Self { base, seen }
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

/// Fast retries so failure paths do not sleep for seconds.
pub fn quick_http() -> cgvm_core::net::HttpClient {
    cgvm_core::net::HttpClient::new(cgvm_core::net::HttpConfig {
        backoff_base: std::time::Duration::from_millis(5),
        timeout: std::time::Duration::from_secs(10),
        ..Default::default()
    })
}
