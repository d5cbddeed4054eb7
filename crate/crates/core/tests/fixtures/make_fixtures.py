"""Regenerate the oracle fixtures used by tests/oracles.rs.

Packets are built and dissected with scapy, cross-read with dpkt, and the
divergence values come from scipy. Run from this directory:

    python3 make_fixtures.py
"""

import json
import struct
from decimal import Decimal

import dpkt
import numpy as np
from scapy.all import (ARP, DNS, DNSQR, DNSRR, ICMP, IP, TCP, UDP, Ether, IPOption, PcapWriter, Raw, dns_compress)
from scipy.spatial.distance import jensenshannon

CLIENT_MAC, SERVER_MAC = "02:00:5e:10:00:02", "00:1b:21:3a:4f:01"


def frames():
    eth_c = Ether(src=CLIENT_MAC, dst=SERVER_MAC)
    eth_s = Ether(src=SERVER_MAC, dst=CLIENT_MAC)
    syn = eth_c / IP(src="192.168.0.2", dst="93.184.216.34", id=0x1234, ttl=57, tos=0x10, flags="DF") / TCP(
        sport=51000, dport=443, seq=1000, flags="S", window=64240,
        options=[("MSS", 1460), ("SAckOK", b""), ("Timestamp", (12345, 0)), ("NOP", None), ("WScale", 7)])
    synack = eth_s / IP(src="93.184.216.34", dst="192.168.0.2", id=0, ttl=52, flags="DF") / TCP(
        sport=443, dport=51000, seq=4294967000, ack=1001, flags="SA", window=65535, options=[("MSS", 1400)])
    data = eth_c / IP(src="192.168.0.2", dst="93.184.216.34", id=0x1235, ttl=57,
                      options=[IPOption(b"\x94\x04\x00\x00")]) / TCP(
        sport=51000, dport=443, seq=1001, ack=4294967001, flags="PAU", window=501, urgptr=7) / Raw(b"hello, world")
    query = eth_c / IP(src="192.168.0.2", dst="192.168.0.1", id=7) / UDP(sport=53001, dport=53) / DNS(
        id=0xbeef, rd=1, qd=DNSQR(qname="video-edge.twitch.tv"))
    # Name compression gives the parser pointers to follow.
    answer = eth_s / IP(src="192.168.0.1", dst="192.168.0.2", id=8) / UDP(sport=53, dport=53001) / dns_compress(DNS(
        id=0xbeef, qr=1, rd=1, ra=1, qd=DNSQR(qname="video-edge.twitch.tv"),
        an=[DNSRR(rrname="video-edge.twitch.tv", type="CNAME", rdata="edge.cdn.twitch.tv", ttl=60),
            DNSRR(rrname="edge.cdn.twitch.tv", type="A", rdata="93.184.216.34", ttl=30),
            DNSRR(rrname="edge.cdn.twitch.tv", type="A", rdata="93.184.216.35", ttl=30)]))
    ping = eth_c / IP(src="192.168.0.2", dst="8.8.8.8", ttl=64) / ICMP(id=3, seq=1)
    arp = Ether(src=CLIENT_MAC, dst="ff:ff:ff:ff:ff:ff") / ARP(psrc="192.168.0.2", pdst="192.168.0.1")
    frag = eth_c / IP(src="192.168.0.2", dst="93.184.216.34", id=99, frag=185, proto=17) / Raw(b"\x00" * 24)
    udp = eth_s / IP(src="93.184.216.35", dst="192.168.0.2", ttl=117) / UDP(sport=3478, dport=60000) / Raw(b"\xab" * 40)
    return [syn, synack, data, query, answer, ping, arp, frag, udp]


def fields(pkt):
    """Header fields under the names the Rust side uses."""
    out = {}
    raw = bytes(pkt)
    e = Ether(raw)
    out["Ether_dst"] = int(e.dst.replace(":", ""), 16)
    out["Ether_src"] = int(e.src.replace(":", ""), 16)
    out["Ether_type"] = e.type
    if IP not in e:
        return out
    ip = e[IP]
    for f in ["version", "ihl", "tos", "len", "id", "frag", "ttl", "proto", "chksum"]:
        out["IP_" + f] = int(getattr(ip, f))
    out["IP_flags"] = int(ip.flags)
    out["IP_src"] = int.from_bytes(bytes(map(int, ip.src.split("."))), "big")
    out["IP_dst"] = int.from_bytes(bytes(map(int, ip.dst.split("."))), "big")
    out["IP_options"] = int(ip.ihl > 5)
    l4_payload = bytes(ip.payload)
    if ip.frag == 0 and TCP in ip:
        t = ip[TCP]
        for f in ["sport", "dport", "seq", "ack", "dataofs", "reserved", "window", "chksum", "urgptr"]:
            out["TCP_" + f] = int(getattr(t, f))
        out["TCP_flags"] = int(t.flags)
        out["TCP_options"] = int(t.dataofs > 5)
        out["Raw_load"] = int(len(bytes(t.payload)) > 0)
    elif ip.frag == 0 and UDP in ip:
        u = ip[UDP]
        for f in ["sport", "dport", "len", "chksum"]:
            out["UDP_" + f] = int(getattr(u, f))
        out["Raw_load"] = int(len(bytes(u.payload)) > 0)
    else:
        out["Raw_load"] = int(len(l4_payload) > 0)
    return out


def dpkt_view(raw):
    """Flow identity as read by dpkt, or None when not IPv4."""
    eth = dpkt.ethernet.Ethernet(raw)
    if not isinstance(eth.data, dpkt.ip.IP):
        return None
    ip = eth.data
    sport = dport = 0
    if ip.offset == 0 and isinstance(ip.data, (dpkt.tcp.TCP, dpkt.udp.UDP)):
        sport, dport = ip.data.sport, ip.data.dport
    return {"src": ".".join(map(str, ip.src)), "dst": ".".join(map(str, ip.dst)),
            "sport": sport, "dport": dport, "proto": ip.p}


def write(name, pkts, nano):
    w = PcapWriter(name, linktype=1, nano=nano, sync=True)
    for i, p in enumerate(pkts):
        p.time = Decimal(1_700_000_000 + i) + (Decimal("0.000123456") if nano else Decimal("0.000123"))
        w.write(p)
    w.close()


def record_times(name):
    """(sec, frac) of every record, read straight from the record headers."""
    with open(name, "rb") as f:
        data = f.read()
    out, pos = [], 24
    while pos < len(data):
        sec, frac, incl, _ = struct.unpack_from("<IIII", data, pos)
        out.append([sec, frac])
        pos += 16 + incl
    return out


def main():
    pkts = frames()
    write("oracle_micro.pcap", pkts, nano=False)
    write("oracle_nano.pcap", pkts, nano=True)

    with open("oracle_micro.pcap", "rb") as f:
        recs = [(ts, raw) for ts, raw in dpkt.pcap.Reader(f)]
    with open("oracle_nano.pcap", "rb") as f:
        nano = dpkt.pcap.Reader(f)
        nano_recs = [raw for _, raw in nano]

    packets = []
    for (ts, raw), p in zip(recs, pkts):
        assert raw == bytes(p)
        packets.append({"len": len(raw), "ts_sec": int(ts), "fields": fields(p), "flow": dpkt_view(raw)})
    assert nano_recs == [bytes(p) for p in pkts]

    dns = DNS(bytes(pkts[4][UDP].payload))
    assert dns.ancount == 3
    answers = [r.rdata for r in dns.an if r.type == 1]
    raw_dns = bytes(pkts[4][UDP].payload)
    assert b"\xc0" in raw_dns, "expected compression pointers"

    dists = [([0.5, 0.5], [1.0, 0.0]), ([0.2, 0.8], [0.6, 0.4]), ([0.1, 0.3, 0.6], [0.3, 0.3, 0.4]),
             ([0.25, 0.25, 0.5], [0.0, 0.5, 0.5]), ([0.9, 0.1], [0.85, 0.15])]
    metrics = []
    for p, q in dists:
        p, q = np.array(p), np.array(q)
        metrics.append({"p": p.tolist(), "q": q.tolist(),
                        "jsd": float(jensenshannon(p, q, base=2) ** 2),
                        "tvd": float(0.5 * np.abs(p - q).sum()),
                        "hd": float(np.sqrt(0.5 * ((np.sqrt(p) - np.sqrt(q)) ** 2).sum()))})

    with open("oracle.json", "w") as f:
        json.dump({"micro_times": record_times("oracle_micro.pcap"), "nano_times": record_times("oracle_nano.pcap"),
                   "packets": packets, "dns_answer_index": 4, "dns_a_records": answers, "metrics": metrics}, f, indent=1)


if __name__ == "__main__":
    main()
