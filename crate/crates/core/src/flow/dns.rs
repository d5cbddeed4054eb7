//! Just enough DNS message parsing to read questions and A records.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::headers::{be16, be32};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DnsError {
    #[error("DNS message truncated")]
    Truncated,
    #[error("bad name encoding")]
    BadName,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DnsRecord {
    A { name: String, ttl: u32, addr: Ipv4Addr },
    Other { name: String, rtype: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsMessage {
    pub id: u16,
    pub is_response: bool,
    pub questions: Vec<String>,
    pub answers: Vec<DnsRecord>,
}

const MAX_POINTER_HOPS: usize = 32;

/// Read a possibly-compressed name at `pos`; returns the name and the
/// offset just past it in the original (non-jumped) position.
fn read_name(msg: &[u8], mut pos: usize) -> Result<(String, usize), DnsError> {
    let mut labels: Vec<String> = Vec::new();
    let mut end = None;
    let mut hops = 0;
    loop {
        let len = *msg.get(pos).ok_or(DnsError::Truncated)?;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    end.get_or_insert(pos + 1);
                    break;
                }
                let label = msg.get(pos + 1..pos + 1 + len as usize).ok_or(DnsError::Truncated)?;
                labels.push(String::from_utf8_lossy(label).into_owned());
                pos += 1 + len as usize;
            }
            0xc0 => {
                let lo = *msg.get(pos + 1).ok_or(DnsError::Truncated)?;
                end.get_or_insert(pos + 2);
                hops += 1;
                if hops > MAX_POINTER_HOPS {
                    return Err(DnsError::BadName);
                }
                pos = (usize::from(len & 0x3f) << 8) | usize::from(lo);
            }
            _ => return Err(DnsError::BadName),
        }
    }
    Ok((labels.join("."), end.unwrap_or(pos)))
}

pub fn parse_dns_message(msg: &[u8]) -> Result<DnsMessage, DnsError> {
    if msg.len() < 12 {
        return Err(DnsError::Truncated);
    }
    let qdcount = be16(msg, 4);
    let ancount = be16(msg, 6);
    let mut pos = 12;
    let mut questions = Vec::with_capacity(usize::from(qdcount));
    for _ in 0..qdcount {
        let (name, next) = read_name(msg, pos)?;
        if msg.len() < next + 4 {
            return Err(DnsError::Truncated);
        }
        questions.push(name);
        pos = next + 4;
    }
    let mut answers = Vec::with_capacity(usize::from(ancount));
    for _ in 0..ancount {
        let (name, next) = read_name(msg, pos)?;
        if msg.len() < next + 10 {
            return Err(DnsError::Truncated);
        }
        let rtype = be16(msg, next);
        let class = be16(msg, next + 2);
        let ttl = be32(msg, next + 4);
        let rdlen = usize::from(be16(msg, next + 8));
        let rdata = msg.get(next + 10..next + 10 + rdlen).ok_or(DnsError::Truncated)?;
        answers.push(if rtype == 1 && class == 1 && rdlen == 4 {
            DnsRecord::A {
                name,
                ttl,
                addr: Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]),
            }
        } else {
            DnsRecord::Other { name, rtype }
        });
        pos = next + 10 + rdlen;
    }
    Ok(DnsMessage {
        id: be16(msg, 0),
        is_response: msg[2] & 0x80 != 0,
        questions,
        answers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{dns_query, dns_response};

    #[test]
    fn response_with_pointer() {
        let m = dns_response(7, "video.example.com", &[Ipv4Addr::new(93, 184, 216, 34)]);
        let parsed = parse_dns_message(&m).unwrap();
        assert!(parsed.is_response);
        assert_eq!(parsed.questions, vec!["video.example.com".to_string()]);
        assert_eq!(
            parsed.answers,
            vec![DnsRecord::A {
                name: "video.example.com".into(),
                ttl: 3600,
                addr: Ipv4Addr::new(93, 184, 216, 34)
            }]
        );
    }

    #[test]
    fn query_is_not_response() {
        let parsed = parse_dns_message(&dns_query(1, "a.b")).unwrap();
        assert!(!parsed.is_response);
        assert!(parsed.answers.is_empty());
    }

    #[test]
    fn pointer_loop_is_rejected() {
        let mut m = vec![0, 1, 0x81, 0x80, 0, 1, 0, 0, 0, 0, 0, 0];
        m.extend_from_slice(&[0xc0, 0x0c]);
        assert_eq!(parse_dns_message(&m), Err(DnsError::BadName));
    }

    #[test]
    fn truncations_never_panic() {
        let m = dns_response(7, "video.example.com", &[Ipv4Addr::new(1, 2, 3, 4)]);
        for cut in 0..m.len() {
            assert!(parse_dns_message(&m[..cut]).is_err());
        }
    }
}
