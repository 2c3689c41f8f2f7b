mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Stdio};

use common::*;
use dylin::image::Image;
use tempfile::{tempdir, TempDir};

struct Server {
    child: Child,
    addr: String,
    _dir: TempDir,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(ckpts: impl FnOnce(&std::path::Path) -> Vec<PathBuf>) -> Server {
    let dir = tempdir().unwrap();
    let paths = ckpts(dir.path());
    let mut cmd = dylin();
    cmd.arg("serve").arg("--port").arg("0").stdout(Stdio::piped()).stderr(Stdio::null());
    for p in &paths {
        cmd.arg("--ckpt").arg(p);
    }
    let mut child = cmd.spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect("listening line").to_string();
    Server { child, addr, _dir: dir }
}

struct Reply {
    status: u16,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl Reply {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

fn get(addr: &str, target: &str) -> Reply {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {target} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
    let head = String::from_utf8(raw[..split].to_vec()).unwrap();
    let mut lines = head.lines();
    let status = lines.next().unwrap().split(' ').nth(1).unwrap().parse().unwrap();
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once(':').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect();
    let body = raw[split + 4..].to_vec();
    let reply = Reply { status, headers, body };
    if let Some(len) = reply.header("content-length") {
        assert_eq!(len.parse::<usize>().unwrap(), reply.body.len());
    }
    reply
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Splits a multipart body into (part headers, part bytes).
fn multipart(body: &[u8], boundary: &str) -> Vec<(String, Vec<u8>)> {
    let delim = format!("--{boundary}");
    let mut rest = &body[find(body, delim.as_bytes()).unwrap() + delim.len()..];
    let mut parts = Vec::new();
    while !rest.starts_with(b"--") {
        rest = &rest[2..];
        let h_end = find(rest, b"\r\n\r\n").unwrap();
        let head = String::from_utf8_lossy(&rest[..h_end]).into_owned();
        let data = &rest[h_end + 4..];
        let end = find(data, format!("\r\n{delim}").as_bytes()).unwrap();
        parts.push((head, data[..end].to_vec()));
        rest = &data[end + 2 + delim.len()..];
    }
    parts
}

fn decode(body: &[u8]) -> Image {
    Image::decode_png(body).unwrap()
}

#[test]
fn meta_lists_a_single_dylin_checkpoint_without_n_attr() {
    let s = start(|d| vec![save_dylin(d, "solo", "orbiter", 0)]);
    let r = get(&s.addr, "/meta");
    assert_eq!(r.status, 200);
    let list = r.json()["checkpoints"].as_array().unwrap().clone();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["id"], "solo");
    assert_eq!(list[0]["variant"], "Full");
    assert!(list[0].get("n_attr").is_none());
    assert!(list[0]["config"].is_object());
}

#[test]
fn render_returns_png_with_timing_and_clamp_headers() {
    let s = start(|d| vec![save_dylin(d, "m", "orbiter", 0)]);
    let r = get(&s.addr, "/render?ckpt=m&t=0.25&w=20&h=10&cam=front");
    assert_eq!(r.status, 200);
    assert_eq!(r.header("content-type"), Some("image/png"));
    assert!(r.header("x-render-millis").unwrap().parse::<f64>().unwrap() >= 0.0);
    assert!(r.header("x-clamped").is_none());
    let img = decode(&r.body);
    assert_eq!((img.width, img.height), (20, 10));

    let clamped = get(&s.addr, "/render?ckpt=m&t=2&w=20&h=10");
    assert_eq!(clamped.status, 200);
    assert_eq!(clamped.header("x-clamped"), Some("t"));
    let at_one = get(&s.addr, "/render?ckpt=m&t=1&w=20&h=10");
    assert_eq!(clamped.body, at_one.body);
}

#[test]
fn identical_requests_are_byte_identical() {
    let s = start(|d| vec![save_dylin(d, "m", "split", 3)]);
    let q = "/render?ckpt=m&t=0.7&w=16&h=16&cam=orbit:30";
    assert_eq!(get(&s.addr, q).body, get(&s.addr, q).body);
}

#[test]
fn concurrent_renders_match_serial_renders() {
    let s = start(|d| vec![save_dylin(d, "a", "split", 1), save_dylin(d, "b", "split", 2)]);
    let queries: Vec<String> = (0..8)
        .map(|i| format!("/render?ckpt={}&t={}&w=24&h=24&cam=orbit:{}", ["a", "b"][i % 2], i as f64 / 8.0, i * 10))
        .collect();
    let serial: Vec<Vec<u8>> = queries.iter().map(|q| get(&s.addr, q).body).collect();
    let concurrent: Vec<Vec<u8>> = std::thread::scope(|sc| {
        let handles: Vec<_> = queries.iter().rev().map(|q| sc.spawn(|| get(&s.addr, q).body)).collect();
        let mut v: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        v.reverse();
        v
    });
    assert_eq!(serial, concurrent);
    assert_ne!(serial[0], serial[1]);
}

#[test]
fn malformed_queries_get_json_400_and_unknown_checkpoints_404() {
    let s = start(|d| vec![save_dylin(d, "m", "orbiter", 0), save_codylin(d, "face")]);
    for q in [
        "/render?ckpt=m&t=abc",
        "/render?ckpt=m&w=0",
        "/render?ckpt=m&w=5000",
        "/render?ckpt=m&cam=nowhere",
        "/render?ckpt=m&alpha=1",
        "/render?ckpt=face&alpha=1",
        "/render?ckpt=face&alpha=x,y",
        "/render?t=0.5",
        "/masks?ckpt=m",
    ] {
        let r = get(&s.addr, q);
        assert_eq!(r.status, 400, "{q}");
        assert!(r.json()["error"].is_string(), "{q}");
    }
    let r = get(&s.addr, "/render?ckpt=ghost");
    assert_eq!(r.status, 404);
    assert!(r.json()["error"].as_str().unwrap().contains("ghost"));
    // the service keeps answering after errors
    assert_eq!(get(&s.addr, "/render?ckpt=m&w=4&h=4").status, 200);
}

#[test]
fn masks_stream_one_png_per_slot() {
    let s = start(|d| vec![save_codylin(d, "face")]);
    let meta = get(&s.addr, "/meta").json();
    assert_eq!(meta["checkpoints"][0]["n_attr"], 2);
    let r = get(&s.addr, "/masks?ckpt=face&t=0.5&w=8&h=8&alpha=0.5,-0.5");
    assert_eq!(r.status, 200);
    let ctype = r.header("content-type").unwrap();
    let boundary = ctype.split("boundary=").nth(1).unwrap();
    let parts = multipart(&r.body, boundary);
    assert_eq!(parts.len(), 3);
    let mut sum = vec![0.0; 64];
    for (n, (head, png)) in parts.iter().enumerate() {
        assert!(head.contains(&format!("name=\"mask{n}\"")));
        assert!(head.contains("image/png"));
        for (acc, px) in sum.iter_mut().zip(decode(png).channel(0)) {
            *acc += px;
        }
    }
    // slots partition unity up to 8-bit quantization
    assert!(sum.iter().all(|v| (v - 1.0).abs() < 3.0 / 255.0), "{sum:?}");
}
