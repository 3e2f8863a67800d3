//! A loopback NTP responder for offline probing tests and demos.
//!
//! One [`FakeDaemon`] can listen on several local addresses at once, which
//! makes those addresses NTP aliases of each other.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use tokio::net::UdpSocket;
use tokio::task::JoinHandle;

use crate::wire::{decode_packet, NtpPacket, NtpShort, NtpTimestamp, MODE_CLIENT, MODE_SERVER};

/// Header fields the daemon reports about itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DaemonIdentity {
    pub version: u8,
    pub stratum: u8,
    pub refid: [u8; 4],
    pub precision: i8,
    pub poll: i8,
    pub reference_ts: NtpTimestamp,
    pub root_delay: NtpShort,
    pub root_dispersion: NtpShort,
}

impl Default for DaemonIdentity {
    fn default() -> Self {
        Self {
            version: 4,
            stratum: 2,
            refid: [192, 0, 2, 123],
            precision: -23,
            poll: 10,
            reference_ts: NtpTimestamp::new(3_962_563_200, 0x4000_0000),
            root_delay: NtpShort::new(0, 0x0200),
            root_dispersion: NtpShort::new(0, 0x0400),
        }
    }
}

#[derive(Debug)]
struct State {
    identity: DaemonIdentity,
    silent: bool,
}

pub struct FakeDaemon {
    state: Arc<Mutex<State>>,
    addrs: Vec<SocketAddr>,
    tasks: Vec<JoinHandle<()>>,
}

impl FakeDaemon {
    /// Binds every address and starts answering client requests.
    pub async fn bind(addrs: &[SocketAddr], identity: DaemonIdentity) -> std::io::Result<Self> {
        let state = Arc::new(Mutex::new(State { identity, silent: false }));
        let mut bound = Vec::new();
        let mut tasks = Vec::new();
        for a in addrs {
            let sock = UdpSocket::bind(a).await?;
            bound.push(sock.local_addr()?);
            tasks.push(tokio::spawn(serve(sock, Arc::clone(&state))));
        }
        Ok(Self { state, addrs: bound, tasks })
    }

    pub fn local_addrs(&self) -> &[SocketAddr] {
        &self.addrs
    }

    /// Simulates the daemon resynchronizing its clock.
    pub fn set_reference_ts(&self, ts: NtpTimestamp) {
        self.state.lock().unwrap().identity.reference_ts = ts;
    }

    pub fn set_silent(&self, silent: bool) {
        self.state.lock().unwrap().silent = silent;
    }
}

impl Drop for FakeDaemon {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

async fn serve(sock: UdpSocket, state: Arc<Mutex<State>>) {
    let mut buf = [0u8; 512];
    loop {
        let Ok((n, peer)) = sock.recv_from(&mut buf).await else { return };
        let Ok(req) = decode_packet(&buf[..n]) else { continue };
        if req.mode != MODE_CLIENT {
            continue;
        }
        let reply = {
            let st = state.lock().unwrap();
            if st.silent {
                continue;
            }
            let id = st.identity;
            let now = NtpTimestamp::from_datetime(chrono::Utc::now()).unwrap_or_default();
            NtpPacket {
                leap: 0,
                version: id.version,
                mode: MODE_SERVER,
                stratum: id.stratum,
                poll: id.poll,
                precision: id.precision,
                root_delay: id.root_delay,
                root_dispersion: id.root_dispersion,
                refid: id.refid,
                reference_ts: id.reference_ts,
                origin_ts: req.transmit_ts,
                receive_ts: now,
                transmit_ts: now,
            }
        };
        let bytes = reply.encode().expect("valid reply");
        let _ = sock.send_to(&bytes, peer).await;
    }
}
