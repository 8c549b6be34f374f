//! Domain names and RFC 4034 canonical ordering.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MAX_LABEL_LEN: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("empty name")]
    Empty,
    #[error("empty label in {0:?}")]
    EmptyLabel(String),
    #[error("label longer than 63 octets in {0:?}")]
    LabelTooLong(String),
    #[error("bad escape sequence in {0:?}")]
    BadEscape(String),
    #[error("{name} is outside zone {apex}")]
    OutOfZone { name: DomainName, apex: DomainName },
}

/// A domain name stored root-last, lower-cased: `x.w.example` is `["x","w","example"]`.
///
/// `Ord` is the canonical DNSSEC order: labels compared right to left, bytewise,
/// with a proper prefix sorting first. Hence the apex sorts before its children.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DomainName {
    labels: Vec<Box<[u8]>>,
}

impl DomainName {
    pub fn root() -> Self {
        DomainName { labels: Vec::new() }
    }

    /// Builds a name from raw labels (leftmost first). Labels are lower-cased.
    pub fn from_labels<I, L>(labels: I) -> Result<Self, NameError>
    where
        I: IntoIterator<Item = L>,
        L: AsRef<[u8]>,
    {
        let mut out = Vec::new();
        for l in labels {
            let l = l.as_ref();
            if l.is_empty() {
                return Err(NameError::EmptyLabel(String::from_utf8_lossy(l).into_owned()));
            }
            if l.len() > MAX_LABEL_LEN {
                return Err(NameError::LabelTooLong(String::from_utf8_lossy(l).into_owned()));
            }
            out.push(l.to_ascii_lowercase().into_boxed_slice());
        }
        Ok(DomainName { labels: out })
    }

    pub fn labels(&self) -> impl DoubleEndedIterator<Item = &[u8]> + ExactSizeIterator {
        self.labels.iter().map(|l| &**l)
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    /// Label count with a leading `*` excluded, as carried in RRSIG labels fields.
    pub fn rrsig_label_count(&self) -> usize {
        if self.is_wildcard() {
            self.labels.len() - 1
        } else {
            self.labels.len()
        }
    }

    pub fn is_root(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_wildcard(&self) -> bool {
        self.labels.first().is_some_and(|l| &**l == b"*")
    }

    pub fn first_label(&self) -> Option<&[u8]> {
        self.labels.first().map(|l| &**l)
    }

    pub fn parent(&self) -> Option<DomainName> {
        if self.is_root() {
            None
        } else {
            Some(DomainName { labels: self.labels[1..].to_vec() })
        }
    }

    /// Prepends one label.
    pub fn child(&self, label: &[u8]) -> Result<DomainName, NameError> {
        let mut c = DomainName::from_labels([label])?;
        c.labels.extend(self.labels.iter().cloned());
        Ok(c)
    }

    pub fn wildcard_child(&self) -> DomainName {
        self.child(b"*").expect("'*' is a valid label")
    }

    /// Keeps the rightmost `n` labels.
    pub fn suffix(&self, n: usize) -> DomainName {
        let n = n.min(self.labels.len());
        DomainName { labels: self.labels[self.labels.len() - n..].to_vec() }
    }

    /// True if `self` equals `other` or lies below it.
    pub fn is_subdomain_of(&self, other: &DomainName) -> bool {
        self.labels.len() >= other.labels.len()
            && self.labels[self.labels.len() - other.labels.len()..] == other.labels[..]
    }

    pub fn is_strict_subdomain_of(&self, other: &DomainName) -> bool {
        self.labels.len() > other.labels.len() && self.is_subdomain_of(other)
    }

    /// Self, parent, grandparent, ..., root.
    pub fn ancestors(&self) -> impl Iterator<Item = DomainName> + '_ {
        (0..=self.labels.len()).map(move |i| DomainName { labels: self.labels[i..].to_vec() })
    }

    /// Uncompressed wire format with lower-cased labels.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.labels.iter().map(|l| l.len() + 1).sum::<usize>() + 1);
        for l in &self.labels {
            out.push(l.len() as u8);
            out.extend_from_slice(l);
        }
        out.push(0);
        out
    }
}

pub fn parse_name(text: &str) -> Result<DomainName, NameError> {
    text.parse()
}

pub fn canonical_cmp(a: &DomainName, b: &DomainName) -> Ordering {
    a.cmp(b)
}

/// Longest ancestor-or-self of `q` present in `zone_names`.
pub fn closest_encloser(
    zone_names: &BTreeSet<DomainName>,
    apex: &DomainName,
    q: &DomainName,
) -> Result<DomainName, NameError> {
    if !q.is_subdomain_of(apex) {
        return Err(NameError::OutOfZone { name: q.clone(), apex: apex.clone() });
    }
    Ok(q.ancestors()
        .take_while(|a| a.is_subdomain_of(apex))
        .find(|a| zone_names.contains(a))
        .unwrap_or_else(|| apex.clone()))
}

impl Ord for DomainName {
    fn cmp(&self, other: &Self) -> Ordering {
        self.labels.iter().rev().cmp(other.labels.iter().rev())
    }
}

impl PartialOrd for DomainName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for DomainName {
    type Err = NameError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        if text.is_empty() {
            return Err(NameError::Empty);
        }
        if text == "." {
            return Ok(DomainName::root());
        }
        let body = text.strip_suffix('.').unwrap_or(text);
        let mut labels: Vec<Vec<u8>> = vec![Vec::new()];
        let bytes = body.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'.' => labels.push(Vec::new()),
                b'\\' => {
                    let rest = &bytes[i + 1..];
                    if rest.len() >= 3 && rest[..3].iter().all(u8::is_ascii_digit) {
                        let v: u32 = std::str::from_utf8(&rest[..3]).unwrap().parse().unwrap();
                        if v > 255 {
                            return Err(NameError::BadEscape(text.into()));
                        }
                        labels.last_mut().unwrap().push(v as u8);
                        i += 3;
                    } else if let Some(&c) = rest.first() {
                        labels.last_mut().unwrap().push(c);
                        i += 1;
                    } else {
                        return Err(NameError::BadEscape(text.into()));
                    }
                }
                c => labels.last_mut().unwrap().push(c),
            }
            i += 1;
        }
        if labels.iter().any(Vec::is_empty) {
            return Err(NameError::EmptyLabel(text.into()));
        }
        DomainName::from_labels(labels).map_err(|e| match e {
            NameError::LabelTooLong(_) => NameError::LabelTooLong(text.into()),
            other => other,
        })
    }
}

impl fmt::Display for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.labels.is_empty() {
            return f.write_str(".");
        }
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            for &b in l.iter() {
                match b {
                    b'.' | b'\\' => write!(f, "\\{}", b as char)?,
                    0x21..=0x7e => write!(f, "{}", b as char)?,
                    _ => write!(f, "\\{b:03}")?,
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DomainName({self})")
    }
}

impl Serialize for DomainName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DomainName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    #[test]
    fn parses_root_last() {
        let x = n("x.w.example");
        let labels: Vec<_> = x.labels().map(|l| String::from_utf8(l.to_vec()).unwrap()).collect();
        assert_eq!(labels, ["x", "w", "example"]);
        assert_eq!(n("example").label_count(), 1);
        assert_eq!(n("A.Example"), n("a.example"));
        assert_eq!(n("a.example.").to_string(), "a.example");
        assert!(n(".").is_root());
    }

    #[test]
    fn rejects_empty_labels() {
        assert_eq!(parse_name(""), Err(NameError::Empty));
        assert!(matches!(parse_name("a..b"), Err(NameError::EmptyLabel(_))));
        assert!(matches!(parse_name(".a"), Err(NameError::EmptyLabel(_))));
        assert!(matches!(parse_name(&"x".repeat(64)), Err(NameError::LabelTooLong(_))));
    }

    #[test]
    fn escapes_round_trip() {
        let z = n("\\000.example");
        assert_eq!(z.first_label(), Some(&[0u8][..]));
        assert_eq!(z.to_string(), "\\000.example");
        assert_eq!(n(&z.to_string()), z);
        assert!(z < n("*.example"));
    }

    #[test]
    fn canonical_order_of_listing_owners() {
        assert_eq!(canonical_cmp(&n("example"), &n("a.example")), Ordering::Less);
        assert_eq!(canonical_cmp(&n("a.example"), &n("a.example")), Ordering::Equal);
        let mut owners: Vec<_> = [
            "xx.example", "x.y.w.example", "ns.example", "b.example", "*.w.example",
            "ai.example", "x.w.example", "example", "a.example",
        ]
        .iter()
        .map(|s| n(s))
        .collect();
        owners.sort();
        let got: Vec<_> = owners.iter().map(ToString::to_string).collect();
        assert_eq!(
            got,
            [
                "example", "a.example", "ai.example", "b.example", "ns.example", "*.w.example",
                "x.w.example", "x.y.w.example", "xx.example",
            ]
        );
    }

    #[test]
    fn closest_encloser_examples() {
        let apex = n("example");
        let names: BTreeSet<_> = [n("example"), n("b.example")].into();
        assert_eq!(closest_encloser(&names, &apex, &n("a.b.example")).unwrap(), n("b.example"));
        let only_apex: BTreeSet<_> = [n("example")].into();
        assert_eq!(closest_encloser(&only_apex, &apex, &n("example")).unwrap(), n("example"));
        assert!(matches!(
            closest_encloser(&names, &apex, &n("a.other")),
            Err(NameError::OutOfZone { .. })
        ));
    }

    #[test]
    fn rrsig_labels_skip_wildcard() {
        assert_eq!(n("*.w.example").rrsig_label_count(), 2);
        assert_eq!(n("x.w.example").rrsig_label_count(), 3);
        assert_eq!(DomainName::root().rrsig_label_count(), 0);
    }
}
