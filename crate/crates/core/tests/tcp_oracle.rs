use dcf_core::transport::{TcpConfig, TcpReceiver, TcpSender};
use dcf_core::{SimDuration, SimTime};

// Hand schedule with ssthresh = 8: per-RTT window and cwnd at the end of
// each RTT (slow start to 8, then +1/cwnd per ACK).
const WINDOWS: [u64; 10] = [1, 2, 4, 8, 8, 9, 10, 11, 12, 13];
const CWND: [f64; 10] = [
    2.0,
    4.0,
    8.0,
    8.950590647281988,
    9.808420958525629,
    10.690728309365367,
    11.591933986716402,
    12.507967618479318,
    13.435811321570872,
    14.373191800550394,
];

#[test]
fn cwnd_follows_the_hand_schedule_on_an_ideal_link() {
    let cfg = TcpConfig { initial_ssthresh: 8, ..TcpConfig::default() };
    let mut tx = TcpSender::new(cfg);
    let mut rx = TcpReceiver::new();
    let rtt = SimDuration::from_millis(40);
    let mut now = SimTime::ZERO;

    for round in 0..10 {
        // Everything sent in this round is acknowledged one RTT later.
        let burst = tx.ftp_tick();
        assert_eq!(burst.len() as u64, WINDOWS[round], "window in RTT {}", round + 1);
        let sent_at = now;
        now += rtt;
        for seq in burst {
            let ack = rx.on_receive_data(seq);
            tx.on_ack(ack, Some(sent_at), now);
        }
        assert!((tx.cwnd - CWND[round]).abs() < 1e-9, "RTT {}: {} vs {}", round + 1, tx.cwnd, CWND[round]);
    }
    assert_eq!(tx.highest_acked, WINDOWS.iter().sum::<u64>());
    assert_eq!(tx.rto, SimDuration::from_millis(200));
}
