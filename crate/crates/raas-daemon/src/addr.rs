//! Unified endpoint addresses: IPv4, IPv6, or native RDMA GID/LID.
//!
//! Textual forms: `ipv4:a.b.c.d`, `ipv6:[...]`, `rdma:GID/LID` with the GID
//! in hex. Two addresses route to the same shared QP iff they are equal
//! (the address itself is the node key).

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use crate::error::DaemonError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Addr {
    Ipv4(Ipv4Addr),
    Ipv6(Ipv6Addr),
    Rdma { gid: u128, lid: u16 },
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addr::Ipv4(a) => write!(f, "ipv4:{a}"),
            Addr::Ipv6(a) => write!(f, "ipv6:[{a}]"),
            Addr::Rdma { gid, lid } => write!(f, "rdma:{gid:032x}/{lid}"),
        }
    }
}

impl FromStr for Addr {
    type Err = DaemonError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DaemonError::BadConfig(format!("bad address {s:?}"));
        if let Some(rest) = s.strip_prefix("ipv4:") {
            return rest.parse().map(Addr::Ipv4).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("ipv6:") {
            let inner = rest
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(bad)?;
            return inner.parse().map(Addr::Ipv6).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("rdma:") {
            let (gid, lid) = rest.split_once('/').ok_or_else(bad)?;
            let gid = u128::from_str_radix(gid, 16).map_err(|_| bad())?;
            let lid = lid.parse().map_err(|_| bad())?;
            return Ok(Addr::Rdma { gid, lid });
        }
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_all_kinds() {
        for s in [
            "ipv4:10.0.0.1",
            "ipv6:[fe80::1]",
            "rdma:00000000000000000000000000abcdef/7",
        ] {
            let a: Addr = s.parse().unwrap();
            let b: Addr = a.to_string().parse().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn node_key_is_equality() {
        let a: Addr = "ipv4:10.0.0.1".parse().unwrap();
        let b: Addr = "ipv4:10.0.0.1".parse().unwrap();
        let c: Addr = "ipv4:10.0.0.2".parse().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["10.0.0.1", "ipv4:999.0.0.1", "ipv6:fe80::1", "rdma:zz/1", "rdma:00"] {
            assert!(s.parse::<Addr>().is_err(), "{s}");
        }
    }
}
