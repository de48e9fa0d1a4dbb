//! Loopback HTTP server over a simulated archive, for end-to-end tests
//! across real sockets.
//!
//! The archive's replay URIs embed its base URI, so the server binds
//! first and the archive is generated with the bound address as its base:
//! see [`spawn`]. Unlike in-process sessions, the server keeps one shared
//! request counter (the one-shot 503 state) across all connections.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use super::{generate, SimArchive, SimConfig, SimError};

pub struct RunningSimServer {
    pub archive: Arc<SimArchive>,
    /// The archive base, e.g. `http://127.0.0.1:41234`.
    pub base: String,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds a loopback port, rewrites `cfg.archive_base` to it, generates the
/// archive, and serves it until the handle is dropped.
pub fn spawn(mut cfg: SimConfig) -> Result<RunningSimServer, ServeError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let base = format!("http://{}", listener.local_addr()?);
    cfg.archive_base = base.clone();
    let archive = Arc::new(generate(&cfg)?);

    let stop = Arc::new(AtomicBool::new(false));
    let attempts: Arc<Mutex<HashMap<String, u32>>> = Arc::new(Mutex::new(HashMap::new()));
    let handle = {
        let archive = Arc::clone(&archive);
        let stop = Arc::clone(&stop);
        listener.set_nonblocking(true)?;
        std::thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let archive = Arc::clone(&archive);
                        let attempts = Arc::clone(&attempts);
                        std::thread::spawn(move || {
                            let _ = handle_connection(stream, &archive, &attempts);
                        });
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(std::time::Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        })
    };

    Ok(RunningSimServer { archive, base, stop, handle: Some(handle) })
}

impl Drop for RunningSimServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    archive: &SimArchive,
    attempts: &Mutex<HashMap<String, u32>>,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    // Drain headers.
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }

    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or("/"));
    if method != "GET" {
        return write_response(&mut stream, 405, None, None, b"");
    }

    let uri = format!("{}{}", archive.archive_base(), path);
    let attempt = {
        let mut map = attempts.lock().unwrap();
        let n = map.entry(uri.clone()).or_insert(0);
        let a = *n;
        *n += 1;
        a
    };
    match archive.respond(&uri, attempt) {
        Ok(resp) => write_response(
            &mut stream,
            resp.status,
            resp.content_type.as_deref(),
            resp.location.as_deref(),
            &resp.body,
        ),
        // Injected transport failure: drop the connection mid-flight.
        Err(_) => {
            let _ = stream.shutdown(std::net::Shutdown::Both);
            Ok(())
        }
    }
}

fn write_response(
    stream: &mut TcpStream,
    status: u16,
    content_type: Option<&str>,
    location: Option<&str>,
    body: &[u8],
) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        301 => "Moved Permanently",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let mut head = format!("HTTP/1.1 {status} {reason}\r\n");
    if let Some(ct) = content_type {
        head.push_str(&format!("Content-Type: {ct}\r\n"));
    }
    if let Some(loc) = location {
        head.push_str(&format!("Location: {loc}\r\n"));
    }
    head.push_str(&format!("Content-Length: {}\r\nConnection: close\r\n\r\n", body.len()));
    stream.write_all(head.as_bytes())?;
    stream.write_all(body)?;
    stream.flush()
}
