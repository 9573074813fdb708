// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::frame::{decode_frame, encode_frame, read_frame, write_frame, FrameError};
use super::{Peer, ProtocolMessage};
use crate::ids::Timestamp;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("no peer at {0}")]
    NoSuchPeer(String),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Frame(#[from] FrameError),
}

/// Sends one message and collects every reply.
pub trait Transport {
    fn exchange(&self, address: &str, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, TransportError>;
}

type Clock = Box<dyn Fn() -> Timestamp + Send + Sync>;

/// In-process network. Messages go through the same framing as TCP.
pub struct LoopbackNetwork {
    peers: Mutex<BTreeMap<String, Arc<Mutex<Peer>>>>,
    down: Mutex<BTreeSet<String>>,
    clock: Clock,
}

impl Default for LoopbackNetwork {
    fn default() -> Self {
        Self::with_clock(Timestamp::now)
    }
}

impl LoopbackNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_clock(clock: impl Fn() -> Timestamp + Send + Sync + 'static) -> Self {
        LoopbackNetwork {
            peers: Mutex::new(BTreeMap::new()),
            down: Mutex::new(BTreeSet::new()),
            clock: Box::new(clock),
        }
    }

    /// Registers `peer` under its address and returns the shared handle.
    pub fn add(&self, peer: Peer) -> Arc<Mutex<Peer>> {
        let address = peer.address.clone();
        let handle = Arc::new(Mutex::new(peer));
        self.peers.lock().expect("peer table").insert(address, handle.clone());
        handle
    }

    pub fn get(&self, address: &str) -> Option<Arc<Mutex<Peer>>> {
        self.peers.lock().expect("peer table").get(address).cloned()
    }

    /// Marks a peer as unreachable (or reachable again).
    pub fn set_down(&self, address: &str, down: bool) {
        let mut set = self.down.lock().expect("down set");
        if down {
            set.insert(address.to_string());
        } else {
            set.remove(address);
        }
    }
}

impl Transport for LoopbackNetwork {
    fn exchange(&self, address: &str, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, TransportError> {
        if self.down.lock().expect("down set").contains(address) {
            return Err(TransportError::NoSuchPeer(address.to_string()));
        }
        let peer = self.get(address).ok_or_else(|| TransportError::NoSuchPeer(address.to_string()))?;
        let inbound = decode_frame(&encode_frame(msg))?;
        let mut wire = Vec::new();
        {
            let mut peer = peer.lock().expect("peer lock");
            for m in &inbound {
                for reply in peer.handle(m, (self.clock)()) {
                    wire.extend(encode_frame(&reply));
                }
            }
        }
        Ok(decode_frame(&wire)?)
    }
}

/// One connection per exchange: write the frame, half-close, read replies
/// until the server closes.
#[derive(Clone, Debug)]
pub struct TcpTransport {
    pub timeout: Duration,
}

impl Default for TcpTransport {
    fn default() -> Self {
        TcpTransport {
            timeout: Duration::from_secs(10),
        }
    }
}

impl Transport for TcpTransport {
    fn exchange(&self, address: &str, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, TransportError> {
        let addr = address
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| TransportError::NoSuchPeer(address.to_string()))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        write_frame(&mut stream, msg)?;
        stream.flush()?;
        stream.shutdown(Shutdown::Write)?;
        let mut replies = Vec::new();
        while let Some(m) = read_frame(&mut stream)? {
            replies.push(m);
        }
        Ok(replies)
    }
}

fn serve_connection(mut stream: TcpStream, peer: &Mutex<Peer>, now: Timestamp) -> Result<(), TransportError> {
    let mut replies = Vec::new();
    while let Some(m) = read_frame(&mut stream)? {
        replies.extend(peer.lock().expect("peer lock").handle(&m, now));
    }
    for r in &replies {
        write_frame(&mut stream, r)?;
    }
    stream.flush()?;
    Ok(())
}

/// Serves `peer` on `listener` from a background thread, one connection at
/// a time so each territory handles its messages serially.
pub fn spawn_peer_server(
    listener: TcpListener,
    peer: Arc<Mutex<Peer>>,
    clock: impl Fn() -> Timestamp + Send + 'static,
) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            // A broken connection only affects its own exchange.
            let _ = serve_connection(stream, &peer, clock());
        }
    })
}
