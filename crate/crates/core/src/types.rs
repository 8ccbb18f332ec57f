//! Palace addressing and drawer identity.
//!
//! Wing, room, hall and closet are metadata only. Every drawer lives in one
//! flat store; the address is used for filtering, never for placement.

use std::fmt;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};

use crate::error::{PalaceError, Result};

/// Number of hex characters of the content digest kept in a drawer id.
pub const DRAWER_HASH_LEN: usize = 12;

pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// Lowercases and maps every character outside `[a-z0-9_]` to `_`,
/// collapsing runs. Returns `None` when nothing usable remains.
pub fn sanitize_identifier(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars().flat_map(char::to_lowercase) {
        let c = if c.is_ascii_lowercase() || c.is_ascii_digit() { c } else { '_' };
        if c == '_' && out.ends_with('_') {
            continue;
        }
        out.push(c);
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PalaceAddress {
    pub wing: String,
    pub room: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hall: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closet: Option<String>,
}

impl PalaceAddress {
    /// Builds and validates a wing/room address.
    pub fn new(wing: impl Into<String>, room: impl Into<String>) -> Result<Self> {
        let addr = PalaceAddress {
            wing: wing.into(),
            room: room.into(),
            hall: None,
            closet: None,
        };
        validate_address(&addr)?;
        Ok(addr)
    }

    pub fn with_hall(mut self, hall: impl Into<String>) -> Result<Self> {
        self.hall = Some(hall.into());
        validate_address(&self)?;
        Ok(self)
    }

    pub fn with_closet(mut self, closet: impl Into<String>) -> Result<Self> {
        self.closet = Some(closet.into());
        validate_address(&self)?;
        Ok(self)
    }
}

impl fmt::Display for PalaceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.wing, self.room)?;
        if let Some(hall) = &self.hall {
            write!(f, "/{hall}")?;
        }
        if let Some(closet) = &self.closet {
            write!(f, "#{closet}")?;
        }
        Ok(())
    }
}

pub fn validate_address(addr: &PalaceAddress) -> Result<()> {
    let check = |field: &'static str, value: &str| {
        if is_identifier(value) {
            Ok(())
        } else {
            Err(PalaceError::AddressInvalid {
                field,
                value: value.to_string(),
            })
        }
    };
    check("wing", &addr.wing)?;
    check("room", &addr.room)?;
    if let Some(hall) = &addr.hall {
        check("hall", hall)?;
    }
    if let Some(closet) = &addr.closet {
        check("closet", closet)?;
    }
    Ok(())
}

pub(crate) fn md5_hex(bytes: &[u8]) -> String {
    let digest = Md5::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// `drawer_{wing}_{room}_{md5(content)[:12]}` over the raw UTF-8 bytes of
/// `content`. Hall and closet do not participate.
pub fn derive_drawer_id(wing: &str, room: &str, content: &str) -> Result<String> {
    if content.is_empty() {
        return Err(PalaceError::invalid("drawer content must be non-empty"));
    }
    for (field, value) in [("wing", wing), ("room", room)] {
        if !is_identifier(value) {
            return Err(PalaceError::AddressInvalid {
                field,
                value: value.to_string(),
            });
        }
    }
    let hash = md5_hex(content.as_bytes());
    Ok(format!("drawer_{wing}_{room}_{}", &hash[..DRAWER_HASH_LEN]))
}

/// The content-hash suffix of a drawer id.
pub fn drawer_content_hash(drawer_id: &str) -> Option<&str> {
    let (_, tail) = drawer_id.rsplit_once('_')?;
    (tail.len() == DRAWER_HASH_LEN).then_some(tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawerKind {
    ProjectChunk,
    ConvoExchange,
    Manual,
}

impl DrawerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DrawerKind::ProjectChunk => "project_chunk",
            DrawerKind::ConvoExchange => "convo_exchange",
            DrawerKind::Manual => "manual",
        }
    }
}

/// Atomic memory unit. `content` is stored exactly as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drawer {
    pub id: String,
    pub content: String,
    pub address: PalaceAddress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
    pub timestamp: String,
    pub kind: DrawerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<u32>,
}

impl Drawer {
    /// Creates a drawer whose id is derived from its address and content.
    pub fn new(
        content: impl Into<String>,
        address: PalaceAddress,
        kind: DrawerKind,
        timestamp: impl Into<String>,
    ) -> Result<Self> {
        let content = content.into();
        validate_address(&address)?;
        let id = derive_drawer_id(&address.wing, &address.room, &content)?;
        Ok(Drawer {
            id,
            content,
            address,
            source_file: None,
            timestamp: timestamp.into(),
            kind,
            session_id: None,
            turn_index: None,
        })
    }

    pub fn with_source_file(mut self, path: impl Into<String>) -> Self {
        self.source_file = Some(path.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn drawer_id_matches_reference_md5() {
        // md5("hello") = 5d41402abc4b2a76b9719d911017c592
        assert_eq!(
            derive_drawer_id("dev", "api", "hello").unwrap(),
            "drawer_dev_api_5d41402abc4b"
        );
    }

    #[test]
    fn drawer_id_hashes_raw_utf8() {
        // md5 of the UTF-8 bytes of "héllo" (c3 a9), computed with hashlib.
        let id = derive_drawer_id("dev", "api", "h\u{e9}llo").unwrap();
        assert_eq!(id, format!("drawer_dev_api_{}", &md5_hex("h\u{e9}llo".as_bytes())[..12]));
        assert_ne!(id, derive_drawer_id("dev", "api", "he\u{301}llo").unwrap());
    }

    #[test]
    fn wing_changes_prefix_not_suffix() {
        let a = derive_drawer_id("dev", "api", "same text").unwrap();
        let b = derive_drawer_id("docs", "api", "same text").unwrap();
        assert_ne!(a, b);
        assert_eq!(drawer_content_hash(&a), drawer_content_hash(&b));
    }

    #[test]
    fn empty_content_rejected() {
        assert!(matches!(
            derive_drawer_id("dev", "api", ""),
            Err(PalaceError::InvalidInput(_))
        ));
    }

    #[test]
    fn address_validation_names_field() {
        assert!(PalaceAddress::new("dev", "api").is_ok());
        match PalaceAddress::new("Dev", "api") {
            Err(PalaceError::AddressInvalid { field, .. }) => assert_eq!(field, "wing"),
            other => panic!("unexpected {other:?}"),
        }
        match PalaceAddress::new("dev", "") {
            Err(PalaceError::AddressInvalid { field, .. }) => assert_eq!(field, "room"),
            other => panic!("unexpected {other:?}"),
        }
        let bad_hall = PalaceAddress::new("dev", "api").unwrap().with_hall("a-b");
        assert!(matches!(
            bad_hall,
            Err(PalaceError::AddressInvalid { field: "hall", .. })
        ));
    }

    #[test]
    fn sanitize() {
        assert_eq!(sanitize_identifier("My Project-2").as_deref(), Some("my_project_2"));
        assert_eq!(sanitize_identifier("--"), None);
        assert_eq!(sanitize_identifier("backend"), Some("backend".into()));
    }

    proptest! {
        #[test]
        fn id_is_pure(wing in "[a-z0-9_]{1,8}", room in "[a-z0-9_]{1,8}", content in ".{1,64}") {
            let a = derive_drawer_id(&wing, &room, &content).unwrap();
            let b = derive_drawer_id(&wing, &room, &content).unwrap();
            prop_assert_eq!(&a, &b);
            let prefix = format!("drawer_{wing}_{room}_");
            prop_assert!(a.starts_with(&prefix));
        }

        #[test]
        fn hall_and_closet_do_not_affect_id(hall in "[a-z]{1,6}", closet in "[a-z]{1,6}", content in ".{1,32}") {
            let base = PalaceAddress::new("w", "r").unwrap();
            let d1 = Drawer::new(content.clone(), base.clone(), DrawerKind::Manual, "t").unwrap();
            let moved = base.with_hall(hall).unwrap().with_closet(closet).unwrap();
            let d2 = Drawer::new(content, moved, DrawerKind::Manual, "t").unwrap();
            prop_assert_eq!(d1.id, d2.id);
        }
    }
}
