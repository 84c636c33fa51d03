use std::net::{SocketAddr, TcpListener, UdpSocket};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use sns_client::{Client, ClientConfig, ClientError, QueryOutcome, Shape, TransportPreference};
use sns_core::protocol::{read_frame, write_frame, MAX_TCP_FRAME};
use sns_core::{Body, CellId, DeviceId, ErrorCode, Interval, IntervalSet, Match, Message, NetworkAddress};

fn one_match() -> Match {
    Match {
        device_id: DeviceId::from_u128(0xab),
        address: NetworkAddress::new("10.1.2.3".parse().unwrap(), 8080, Some("lamp".into())).unwrap(),
        matched: IntervalSet::from_intervals(vec![Interval::new(4, 6).unwrap()]),
    }
}

/// A UDP responder that answers each request with whatever `reply` returns.
/// Returns its address and a counter of datagrams received.
fn udp_fake<F>(reply: F) -> (SocketAddr, Arc<AtomicUsize>)
where
    F: Fn(&Message, usize) -> Vec<Vec<u8>> + Send + 'static,
{
    let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = socket.local_addr().unwrap();
    let seen = Arc::new(AtomicUsize::new(0));
    let counter = seen.clone();
    thread::spawn(move || {
        let mut buf = [0u8; 2048];
        while let Ok((n, peer)) = socket.recv_from(&mut buf) {
            let nth = counter.fetch_add(1, Ordering::SeqCst);
            let Ok(req) = Message::decode(&buf[..n]) else { continue };
            for out in reply(&req, nth) {
                let _ = socket.send_to(&out, peer);
            }
        }
    });
    (addr, seen)
}

/// A TCP responder on a given address, one request per connection.
fn tcp_fake_on(listener: TcpListener, results: Vec<Match>) {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Ok(Some(frame)) = read_frame(&mut stream, MAX_TCP_FRAME) else { continue };
            let req = Message::decode(&frame).unwrap();
            let reply = req.reply(Body::Response { results: results.clone() });
            write_frame(&mut stream, &reply.encode()).unwrap();
        }
    });
}

fn config(addr: SocketAddr) -> ClientConfig {
    let mut cfg = ClientConfig::new(addr);
    cfg.timeout = Duration::from_millis(100);
    cfg
}

fn point() -> Shape {
    Shape::Circle {
        center_x_cm: 10,
        center_y_cm: 10,
        radius_cm: 5,
    }
}

#[test]
fn replies_to_other_requests_are_ignored() {
    let (addr, _) = udp_fake(|req, _| {
        let mut stray = req.reply(Body::Response { results: vec![] });
        stray.request_id ^= 1;
        let real = req.reply(Body::Response { results: vec![one_match()] });
        // garbage, a stray reply, an echo of the request, then the real one
        vec![vec![0xff; 7], stray.encode(), req.encode(), real.encode()]
    });
    let mut client = Client::new(config(addr)).unwrap();
    assert_eq!(
        client.query(point(), 0).unwrap(),
        QueryOutcome::Found(vec![one_match()])
    );
    assert_eq!(client.last_transport(), Some("udp"));
}

#[test]
fn silent_server_times_out_after_retries() {
    let (addr, seen) = udp_fake(|_, _| vec![]);
    let mut cfg = config(addr);
    cfg.retries = 3;
    cfg.timeout = Duration::from_millis(50);
    let mut client = Client::new(cfg).unwrap();
    let start = Instant::now();
    let err = client.query(point(), 0).unwrap_err();
    assert!(matches!(err, ClientError::Timeout));
    assert!(err.is_transport());
    assert!(start.elapsed() >= Duration::from_millis(200));
    thread::sleep(Duration::from_millis(20));
    assert_eq!(seen.load(Ordering::SeqCst), 4);
}

#[test]
fn lost_first_reply_is_recovered_by_a_resend() {
    let (addr, seen) = udp_fake(|req, nth| {
        if nth == 0 {
            return vec![];
        }
        vec![req.reply(Body::Response { results: vec![] }).encode()]
    });
    let mut client = Client::new(config(addr)).unwrap();
    client.deregister(DeviceId::from_u128(1)).unwrap();
    assert_eq!(seen.load(Ordering::SeqCst), 2);
}

#[test]
fn requests_are_padded() {
    let (addr, _) = udp_fake(|req, _| {
        // report the received padding back through the detail string
        vec![req
            .reply(Body::Error {
                code: ErrorCode::Other(100),
                detail: format!("len={}", req.encoded_len()),
            })
            .encode()]
    });
    for (pad_to, expect) in [(512, 512), (0, sns_client::MIN_UDP_REQUEST), (100, 100)] {
        let mut cfg = config(addr);
        cfg.udp_pad_to = pad_to;
        let mut client = Client::new(cfg).unwrap();
        let reply = client.request(Body::Deregister { device_id: DeviceId::from_u128(2) }).unwrap();
        assert_eq!(reply.detail_value("len"), Some(expect as u64), "pad_to {pad_to}");
    }
}

#[test]
fn response_too_large_switches_to_tcp() {
    let tcp = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = tcp.local_addr().unwrap();
    let udp = UdpSocket::bind(addr).unwrap();
    let many: Vec<Match> = (0..50).map(|_| one_match()).collect();
    tcp_fake_on(tcp, many.clone());
    thread::spawn(move || {
        let mut buf = [0u8; 2048];
        while let Ok((n, peer)) = udp.recv_from(&mut buf) {
            let req = Message::decode(&buf[..n]).unwrap();
            let reply = req.reply(Body::error_with_value(ErrorCode::ResponseTooLarge, "count", 50));
            udp.send_to(&reply.encode(), peer).unwrap();
        }
    });
    let mut client = Client::new(config(addr)).unwrap();
    assert_eq!(client.query(point(), 0).unwrap(), QueryOutcome::Found(many));
    assert_eq!(client.last_transport(), Some("tcp"));
}

#[test]
fn tcp_preference_and_oversized_requests_skip_udp() {
    let tcp = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = tcp.local_addr().unwrap();
    tcp_fake_on(tcp, vec![]);

    let mut cfg = config(addr);
    cfg.transport = TransportPreference::Tcp;
    let mut client = Client::new(cfg).unwrap();
    assert_eq!(client.query(point(), 0).unwrap(), QueryOutcome::Found(vec![]));
    assert_eq!(client.last_transport(), Some("tcp"));

    // 200 intervals do not fit in one datagram; no UDP server is listening
    let mut client = Client::new(config(addr)).unwrap();
    let list: Vec<Interval> = (0..200).map(|i| Interval::point(i * 2)).collect();
    assert_eq!(client.query_intervals(list, 0).unwrap(), QueryOutcome::Found(vec![]));
    assert_eq!(client.last_transport(), Some("tcp"));
}

#[test]
fn error_replies_map_to_client_errors() {
    let (addr, _) = udp_fake(|req, _| {
        let body = match &req.body {
            Body::QueryGeom { .. } => Body::error_with_value(ErrorCode::TooManyResults, "count", 99),
            Body::Update { .. } => Body::error_with_value(ErrorCode::StaleVersion, "current", 4),
            _ => Body::Error {
                code: ErrorCode::Unauthorized,
                detail: String::new(),
            },
        };
        vec![req.reply(body).encode()]
    });
    let mut client = Client::new(config(addr)).unwrap();
    assert_eq!(client.query(point(), 0).unwrap(), QueryOutcome::TooMany { count: 99 });
    let err = client
        .announce(
            DeviceId::from_u128(1),
            one_match().address,
            sns_core::protocol::Area::Shape(point()),
            2,
        )
        .unwrap_err();
    assert!(matches!(err, ClientError::Stale { current: 4 }));
    let err = client.deregister(DeviceId::from_u128(1)).unwrap_err();
    assert!(matches!(err, ClientError::Unauthorized));
    assert!(!err.is_transport());
}

#[test]
fn snsctl_query_prints_json() {
    let (addr, _) = udp_fake(|req, _| vec![req.reply(Body::Response { results: vec![one_match()] }).encode()]);
    let out = Command::new(env!("CARGO_BIN_EXE_snsctl"))
        .args(["--server", &addr.to_string(), "--json", "query", "--x", "1", "--y", "1", "--radius", "0.5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["address"], "10.1.2.3:8080");
    assert_eq!(v["label"], "lamp");
    assert_eq!(v["matched"], "4-6");
}

#[test]
fn snsctl_exit_codes() {
    let (addr, _) = udp_fake(|req, _| {
        vec![req
            .reply(Body::error_with_value(ErrorCode::TooManyResults, "count", 7))
            .encode()]
    });
    let status = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_snsctl"))
            .args(args)
            .output()
            .unwrap()
            .status
            .code()
    };
    let server = addr.to_string();
    assert_eq!(status(&["--server", &server, "query", "--intervals", "1-5"]), Some(3));
    // nothing listens on a fresh port
    let dead = UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    assert_eq!(
        status(&["--server", &dead, "--timeout-ms", "20", "--retries", "0", "query", "--intervals", "1"]),
        Some(1)
    );
    assert_eq!(status(&["--server", &server, "query", "--rect", "1,2,3"]), Some(2));
}

#[test]
fn snsloc_round_trip() {
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_snsloc")).args(args).output().unwrap();
        (out.status.code(), String::from_utf8(out.stdout).unwrap().trim().to_string())
    };
    let (code, hex) = run(&["encode", "52 12 40.4 N 0 5 31.9 E 22m 10m 10m 10m"]);
    assert_eq!(code, Some(0));
    assert_eq!(hex, "001313138b340c508005107c00989f18");
    let (code, text) = run(&["print", &hex]);
    assert_eq!(code, Some(0));
    let (_, again) = run(&["encode", &text]);
    assert_eq!(again, hex);
    let (code, _) = run(&["decode", "0013"]);
    assert_eq!(code, Some(2));
}

#[test]
fn cell_id_is_sent() {
    let (addr, _) = udp_fake(|req, _| {
        vec![req
            .reply(Body::error_with_value(ErrorCode::CellMismatch, "cell", req.cell_id.0 + 1))
            .encode()]
    });
    let mut cfg = config(addr);
    cfg.cell_id = CellId(41);
    let mut client = Client::new(cfg).unwrap();
    let err = client.query(point(), 0).unwrap_err();
    assert!(matches!(err, ClientError::CellMismatch { server_cell: Some(42) }));
}
