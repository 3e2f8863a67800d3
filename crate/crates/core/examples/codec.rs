//! Builds a client request, encodes it, and decodes a hand-made server
//! reply, printing the header fields and what the refid means.
//!
//! cargo run --example codec

use poolscope::wire::{
    decode_response, ntp_to_unix, refid_label, unix_to_ntp, NtpPacket, NtpShort, NtpTimestamp, MODE_SERVER,
};

fn main() {
    let now = unix_to_ntp(1_753_228_800).unwrap();
    let req = NtpPacket::client_request(now).encode().unwrap();
    println!("request  {}", hex(&req));

    let reply = NtpPacket {
        version: 4,
        mode: MODE_SERVER,
        stratum: 1,
        poll: 6,
        precision: -20,
        root_dispersion: NtpShort::new(0, 0x0010),
        refid: *b"GPS\0",
        reference_ts: NtpTimestamp::new(now.seconds - 12, 0),
        origin_ts: now,
        receive_ts: NtpTimestamp::new(now.seconds, 0x1000_0000),
        transmit_ts: NtpTimestamp::new(now.seconds, 0x1000_4000),
        ..NtpPacket::default()
    };
    let bytes = reply.encode().unwrap();
    println!("reply    {}", hex(&bytes));

    let back = decode_response(&bytes).unwrap();
    assert_eq!(back, reply);
    println!("stratum {} precision 2^{} poll 2^{}s", back.stratum, back.precision, back.poll);
    println!("refid {:?}", refid_label(back.stratum, back.refid));
    println!("reference time {} (unix)", ntp_to_unix(back.reference_ts));
    println!("root dispersion {:.6}s", back.root_dispersion.as_secs_f64());

    // stratum 2 refids are upstream hints, not labels
    println!("refid {:?}", refid_label(2, [192, 0, 2, 123]));
}

fn hex(b: &[u8]) -> String {
    b.chunks(8).map(|c| c.iter().map(|x| format!("{x:02x}")).collect::<String>()).collect::<Vec<_>>().join(" ")
}
