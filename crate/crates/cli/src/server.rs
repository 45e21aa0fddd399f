//! Reference oracle server: exposes an in-process model over the JSON wire
//! protocol (`POST {path}` with `{"inputs": [[f64,...],...]}`, response
//! `{"labels": [int,...]}`).

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use mimic_core::error::{Error, Result};
use mimic_core::oracle::{WireRequest, WireResponse};
use mimic_core::Network64;
use tiny_http::{Header, Method, Response, Server};

pub struct ReferenceServer {
    server: Server,
    net: Network64,
    path: String,
}

impl ReferenceServer {
    pub fn bind(addr: &str, net: Network64, path: &str) -> Result<Self> {
        let server = Server::http(addr)
            .map_err(|e| Error::usage(format!("cannot bind oracle server on {addr}: {e}")))?;
        Ok(ReferenceServer {
            server,
            net,
            path: path.to_owned(),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        match self.server.server_addr() {
            tiny_http::ListenAddr::IP(addr) => addr,
            _ => unreachable!("http listener is always an IP socket"),
        }
    }

    /// Serves until `stop` flips; polls so shutdown is prompt.
    pub fn run(&self, stop: &AtomicBool) -> Result<()> {
        while !stop.load(Ordering::Relaxed) {
            match self.server.recv_timeout(Duration::from_millis(50)) {
                Ok(Some(request)) => self.handle(request),
                Ok(None) => {}
                Err(e) => return Err(Error::usage(format!("oracle server receive failed: {e}"))),
            }
        }
        Ok(())
    }

    /// Serves forever (the `serve-oracle` subcommand).
    pub fn run_forever(&self) -> Result<()> {
        let never = AtomicBool::new(false);
        self.run(&never)
    }

    fn handle(&self, mut request: tiny_http::Request) {
        let respond = |request: tiny_http::Request, status: u32, body: String| {
            let header: Header = "Content-Type: application/json"
                .parse()
                .expect("static header");
            let response = Response::from_string(body)
                .with_status_code(status as u16 as i32)
                .with_header(header);
            if let Err(e) = request.respond(response) {
                log::warn!("oracle server response failed: {e}");
            }
        };
        if request.method() != &Method::Post || request.url() != self.path {
            respond(request, 404, r#"{"error":"unknown endpoint"}"#.to_owned());
            return;
        }
        let mut body = String::new();
        if let Err(e) = request.as_reader().read_to_string(&mut body) {
            respond(request, 400, format!(r#"{{"error":"unreadable body: {e}"}}"#));
            return;
        }
        let parsed: std::result::Result<WireRequest, _> = serde_json::from_str(&body);
        let wire = match parsed {
            Ok(w) => w,
            Err(e) => {
                respond(request, 400, format!(r#"{{"error":"bad request: {e}"}}"#));
                return;
            }
        };
        let mut labels = Vec::with_capacity(wire.inputs.len());
        for x in &wire.inputs {
            match self.net.predict(x) {
                Ok(l) => labels.push(l),
                Err(e) => {
                    respond(request, 422, format!(r#"{{"error":"{e}"}}"#));
                    return;
                }
            }
        }
        let body = serde_json::to_string(&WireResponse { labels }).expect("serializable");
        respond(request, 200, body);
    }
}
