use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use medsim::analytics::upload::{flush_queue, upload_report, UploadConfig, UploadOutcome};
use medsim::analytics::{SessionReport, TotalMode};

/// Answers each connection with the next status and reports the request
/// (headers + body) back over the channel.
fn mock_portal(statuses: Vec<u16>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/reports", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for status in statuses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(format!("{head}\n{}", String::from_utf8(body).unwrap())).unwrap();
            let text = if status == 200 { "ok" } else { "nope" };
            write!(&stream, "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}", text.len()).unwrap();
        }
    });
    (url, rx)
}

fn report(id: &str) -> SessionReport {
    SessionReport::new(id, "demo", 0, 1_000_000, TotalMode::Mean, Vec::new()).unwrap()
}

fn config(url: String, dir: &std::path::Path) -> UploadConfig {
    UploadConfig::from_toml_str(&format!("portal_url = \"{url}\"\nportal_token = \"t0k\"\nqueue_dir = \"{}\"\ntimeout_s = 2.0\n", dir.display())).unwrap()
}

#[test]
fn acknowledged_upload_sends_token_and_json() {
    let (url, rx) = mock_portal(vec![200]);
    let dir = tempfile::tempdir().unwrap();
    let out = upload_report(&report("s1"), &config(url, dir.path())).unwrap();
    assert_eq!(out, UploadOutcome::Acknowledged);
    let req = rx.recv().unwrap();
    assert!(req.starts_with("POST /reports"), "{req}");
    assert!(req.to_ascii_lowercase().contains("authorization: bearer t0k"), "{req}");
    let body = req.split_once("\n\n").unwrap().1;
    assert_eq!(serde_json::from_str::<SessionReport>(body).unwrap(), report("s1"));
}

#[test]
fn offline_reports_queue_and_flush_later() {
    let dir = tempfile::tempdir().unwrap();
    // nothing listens on a port we just released
    let dead = format!("http://{}/reports", TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap());
    let cfg = config(dead, dir.path());
    for id in ["a", "b"] {
        assert!(matches!(upload_report(&report(id), &cfg).unwrap(), UploadOutcome::Queued(_)));
    }
    assert_eq!(flush_queue(&cfg).unwrap().still_queued, 2);

    // portal back: one accepted, one refused
    let (url, rx) = mock_portal(vec![200, 422]);
    let s = flush_queue(&config(url, dir.path())).unwrap();
    assert_eq!((s.delivered, s.rejected, s.still_queued), (1, 1, 0));
    assert_eq!(rx.iter().take(2).count(), 2);
    let failed: Vec<_> = std::fs::read_dir(dir.path().join("failed")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(failed.iter().any(|f| f.starts_with("b-") && f.ends_with(".json")), "{failed:?}");
    assert!(failed.iter().any(|f| f.ends_with(".reason")));
}

#[test]
fn server_errors_queue_and_client_errors_reject() {
    let dir = tempfile::tempdir().unwrap();
    let (url, _rx) = mock_portal(vec![503, 400]);
    let cfg = config(url, dir.path());
    assert!(matches!(upload_report(&report("x"), &cfg).unwrap(), UploadOutcome::Queued(_)));
    match upload_report(&report("y"), &cfg).unwrap() {
        UploadOutcome::Rejected { status, record } => {
            assert_eq!(status, 400);
            assert!(record.exists());
        }
        other => panic!("{other:?}"),
    }
}
