//! Proxy-log record types and the HTTP status taxonomy.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Category label used for every absent categorical value.
pub const MISSING: &str = "__missing__";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatusError {
    #[error("status code {0} is outside the HTTP range 100-599")]
    OutOfRange(i64),
}

/// The five HTTP response groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusClass {
    Informational,
    Success,
    Redirect,
    ClientError,
    ServerError,
}

impl StatusClass {
    pub fn is_error(self) -> bool {
        matches!(self, StatusClass::ClientError | StatusClass::ServerError)
    }
}

pub fn classify_status(code: i64) -> Result<StatusClass, StatusError> {
    Ok(match code {
        100..=199 => StatusClass::Informational,
        200..=299 => StatusClass::Success,
        300..=399 => StatusClass::Redirect,
        400..=499 => StatusClass::ClientError,
        500..=599 => StatusClass::ServerError,
        _ => return Err(StatusError::OutOfRange(code)),
    })
}

/// A log line is an error iff its status code is 400 or above.
pub fn is_error(code: i64) -> Result<bool, StatusError> {
    classify_status(code).map(StatusClass::is_error)
}

/// The log line fields, in their canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    StatusCode,
    ContentType,
    Protocol,
    ContentLength,
    TimeFirstByte,
    TimeToServ,
    OsFamily,
    Sid,
    CacheControl,
    UaMajor,
    UaFamily,
    DeviceFamily,
    Fragment,
    Path,
    Timestamp,
    ContentPackage,
    Coordinates,
    LiveChannel,
    DeviceModel,
    DeviceBrand,
    Host,
    Method,
    Manifest,
    AssetNumber,
    Hit,
    CacheName,
    PopName,
    Uid,
}

impl Field {
    pub const ALL: [Field; 28] = [
        Field::StatusCode,
        Field::ContentType,
        Field::Protocol,
        Field::ContentLength,
        Field::TimeFirstByte,
        Field::TimeToServ,
        Field::OsFamily,
        Field::Sid,
        Field::CacheControl,
        Field::UaMajor,
        Field::UaFamily,
        Field::DeviceFamily,
        Field::Fragment,
        Field::Path,
        Field::Timestamp,
        Field::ContentPackage,
        Field::Coordinates,
        Field::LiveChannel,
        Field::DeviceModel,
        Field::DeviceBrand,
        Field::Host,
        Field::Method,
        Field::Manifest,
        Field::AssetNumber,
        Field::Hit,
        Field::CacheName,
        Field::PopName,
        Field::Uid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::StatusCode => "statuscode",
            Field::ContentType => "contenttype",
            Field::Protocol => "protocol",
            Field::ContentLength => "contentlength",
            Field::TimeFirstByte => "timefirstbyte",
            Field::TimeToServ => "timetoserv",
            Field::OsFamily => "osfamily",
            Field::Sid => "sid",
            Field::CacheControl => "cachecontrol",
            Field::UaMajor => "uamajor",
            Field::UaFamily => "uafamily",
            Field::DeviceFamily => "devicefamily",
            Field::Fragment => "fragment",
            Field::Path => "path",
            Field::Timestamp => "timestamp",
            Field::ContentPackage => "contentpackage",
            Field::Coordinates => "coordinates",
            Field::LiveChannel => "livechannel",
            Field::DeviceModel => "devicemodel",
            Field::DeviceBrand => "devicebrand",
            Field::Host => "host",
            Field::Method => "method",
            Field::Manifest => "manifest",
            Field::AssetNumber => "assetnumber",
            Field::Hit => "hit",
            Field::CacheName => "cachename",
            Field::PopName => "popname",
            Field::Uid => "uid",
        }
    }

    /// Position in the canonical column order; used as the tie-breaker
    /// whenever features are ranked.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            Field::ContentLength | Field::TimeFirstByte | Field::TimeToServ
        )
    }

    /// Fields that can never be absent from a valid record.
    pub fn is_required(self) -> bool {
        matches!(
            self,
            Field::StatusCode | Field::Host | Field::Timestamp | Field::Method
        )
    }

    /// Fields offered to the feature-selection stage by default. The status
    /// code is the prediction target; timestamps and geo coordinates are not
    /// treated as clustering attributes.
    pub fn default_candidates() -> Vec<Field> {
        Field::ALL
            .into_iter()
            .filter(|f| {
                !matches!(
                    f,
                    Field::StatusCode | Field::Timestamp | Field::Coordinates
                )
            })
            .collect()
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown field name `{0}`")]
pub struct UnknownField(pub String);

impl FromStr for Field {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| *c != '_' && *c != ' ' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        Field::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| UnknownField(s.to_string()))
    }
}

/// Cache outcome of a request. Anything other than a recognisable hit or
/// miss is treated as missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitStatus {
    Hit,
    Miss,
    #[default]
    Missing,
}

impl HitStatus {
    pub fn parse(raw: &str) -> HitStatus {
        match raw.trim().to_ascii_lowercase().as_str() {
            "hit" | "true" | "1" => HitStatus::Hit,
            "miss" | "false" | "0" => HitStatus::Miss,
            _ => HitStatus::Missing,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HitStatus::Hit => "hit",
            HitStatus::Miss => "miss",
            HitStatus::Missing => MISSING,
        }
    }
}

/// Longitude/latitude pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub longitude: f64,
    pub latitude: f64,
}

/// A borrowed view of one field value.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue<'a> {
    Text(Option<&'a str>),
    Integer(Option<u64>),
    Real(Option<f64>),
    Status(u16),
    Time(DateTime<Utc>),
    Coordinates(Option<Coordinates>),
    Hit(HitStatus),
}

/// One parsed proxy-log line.
///
/// Optional text fields hold `None` when absent; an empty string is never
/// stored. Required fields (`statuscode`, `host`, `timestamp`, `method`) are
/// always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub statuscode: u16,
    pub contenttype: Option<String>,
    pub protocol: Option<String>,
    pub contentlength: Option<u64>,
    pub timefirstbyte: Option<f64>,
    pub timetoserv: Option<f64>,
    pub osfamily: Option<String>,
    pub sid: Option<String>,
    pub cachecontrol: Option<String>,
    pub uamajor: Option<String>,
    pub uafamily: Option<String>,
    pub devicefamily: Option<String>,
    pub fragment: Option<String>,
    pub path: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub contentpackage: Option<String>,
    pub coordinates: Option<Coordinates>,
    pub livechannel: Option<String>,
    pub devicemodel: Option<String>,
    pub devicebrand: Option<String>,
    pub host: String,
    pub method: String,
    pub manifest: Option<String>,
    pub assetnumber: Option<String>,
    pub hit: HitStatus,
    pub cachename: Option<String>,
    pub popname: Option<String>,
    pub uid: Option<String>,
}

impl LogRecord {
    /// A record with only the required fields set.
    pub fn new(
        statuscode: u16,
        host: impl Into<String>,
        method: impl Into<String>,
        timestamp: DateTime<Utc>,
    ) -> Result<LogRecord, StatusError> {
        classify_status(statuscode as i64)?;
        Ok(LogRecord {
            statuscode,
            contenttype: None,
            protocol: None,
            contentlength: None,
            timefirstbyte: None,
            timetoserv: None,
            osfamily: None,
            sid: None,
            cachecontrol: None,
            uamajor: None,
            uafamily: None,
            devicefamily: None,
            fragment: None,
            path: None,
            timestamp,
            contentpackage: None,
            coordinates: None,
            livechannel: None,
            devicemodel: None,
            devicebrand: None,
            host: host.into(),
            method: method.into(),
            manifest: None,
            assetnumber: None,
            hit: HitStatus::Missing,
            cachename: None,
            popname: None,
            uid: None,
        })
    }

    pub fn status_class(&self) -> StatusClass {
        classify_status(self.statuscode as i64).expect("record status validated at construction")
    }

    pub fn is_error(&self) -> bool {
        self.statuscode >= 400
    }

    pub fn value(&self, field: Field) -> FieldValue<'_> {
        use FieldValue::*;
        match field {
            Field::StatusCode => Status(self.statuscode),
            Field::ContentType => Text(self.contenttype.as_deref()),
            Field::Protocol => Text(self.protocol.as_deref()),
            Field::ContentLength => Integer(self.contentlength),
            Field::TimeFirstByte => Real(self.timefirstbyte),
            Field::TimeToServ => Real(self.timetoserv),
            Field::OsFamily => Text(self.osfamily.as_deref()),
            Field::Sid => Text(self.sid.as_deref()),
            Field::CacheControl => Text(self.cachecontrol.as_deref()),
            Field::UaMajor => Text(self.uamajor.as_deref()),
            Field::UaFamily => Text(self.uafamily.as_deref()),
            Field::DeviceFamily => Text(self.devicefamily.as_deref()),
            Field::Fragment => Text(self.fragment.as_deref()),
            Field::Path => Text(self.path.as_deref()),
            Field::Timestamp => Time(self.timestamp),
            Field::ContentPackage => Text(self.contentpackage.as_deref()),
            Field::Coordinates => FieldValue::Coordinates(self.coordinates),
            Field::LiveChannel => Text(self.livechannel.as_deref()),
            Field::DeviceModel => Text(self.devicemodel.as_deref()),
            Field::DeviceBrand => Text(self.devicebrand.as_deref()),
            Field::Host => Text(Some(&self.host)),
            Field::Method => Text(Some(&self.method)),
            Field::Manifest => Text(self.manifest.as_deref()),
            Field::AssetNumber => Text(self.assetnumber.as_deref()),
            Field::Hit => FieldValue::Hit(self.hit),
            Field::CacheName => Text(self.cachename.as_deref()),
            Field::PopName => Text(self.popname.as_deref()),
            Field::Uid => Text(self.uid.as_deref()),
        }
    }

    /// Mutable access to an optional text field, `None` for fields that are
    /// not optional free text.
    pub fn text_slot_mut(&mut self, field: Field) -> Option<&mut Option<String>> {
        Some(match field {
            Field::ContentType => &mut self.contenttype,
            Field::Protocol => &mut self.protocol,
            Field::OsFamily => &mut self.osfamily,
            Field::Sid => &mut self.sid,
            Field::CacheControl => &mut self.cachecontrol,
            Field::UaMajor => &mut self.uamajor,
            Field::UaFamily => &mut self.uafamily,
            Field::DeviceFamily => &mut self.devicefamily,
            Field::Fragment => &mut self.fragment,
            Field::Path => &mut self.path,
            Field::ContentPackage => &mut self.contentpackage,
            Field::LiveChannel => &mut self.livechannel,
            Field::DeviceModel => &mut self.devicemodel,
            Field::DeviceBrand => &mut self.devicebrand,
            Field::Manifest => &mut self.manifest,
            Field::AssetNumber => &mut self.assetnumber,
            Field::CacheName => &mut self.cachename,
            Field::PopName => &mut self.popname,
            Field::Uid => &mut self.uid,
            _ => return None,
        })
    }

    /// The field viewed as a category label; absent values map to
    /// [`MISSING`].
    pub fn category(&self, field: Field) -> Cow<'_, str> {
        match self.value(field) {
            FieldValue::Text(Some(s)) => Cow::Borrowed(s),
            FieldValue::Text(None)
            | FieldValue::Integer(None)
            | FieldValue::Real(None)
            | FieldValue::Coordinates(None) => Cow::Borrowed(MISSING),
            FieldValue::Integer(Some(v)) => Cow::Owned(v.to_string()),
            FieldValue::Real(Some(v)) => Cow::Owned(v.to_string()),
            FieldValue::Status(code) => Cow::Owned(code.to_string()),
            FieldValue::Time(t) => Cow::Owned(format_timestamp(&t)),
            FieldValue::Coordinates(Some(c)) => {
                Cow::Owned(format!("{};{}", c.longitude, c.latitude))
            }
            FieldValue::Hit(h) => Cow::Borrowed(h.as_str()),
        }
    }

    /// Numeric value of a numeric field; `None` when absent or when the field
    /// is not numeric.
    pub fn numeric(&self, field: Field) -> Option<f64> {
        match self.value(field) {
            FieldValue::Integer(v) => v.map(|v| v as f64),
            FieldValue::Real(v) => v,
            FieldValue::Status(code) => Some(code as f64),
            _ => None,
        }
    }
}

pub(crate) fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        assert_eq!(classify_status(403), Ok(StatusClass::ClientError));
        assert_eq!(classify_status(502), Ok(StatusClass::ServerError));
        assert_eq!(classify_status(200), Ok(StatusClass::Success));
        assert_eq!(classify_status(99), Err(StatusError::OutOfRange(99)));
        assert_eq!(classify_status(600), Err(StatusError::OutOfRange(600)));
        assert!(StatusError::OutOfRange(600).to_string().contains("600"));
    }

    #[test]
    fn error_boundary() {
        assert_eq!(is_error(399), Ok(false));
        assert_eq!(is_error(400), Ok(true));
        assert_eq!(is_error(503), Ok(true));
        assert!(is_error(-1).is_err());
    }

    #[test]
    fn partition_property() {
        for code in 100..600 {
            let class = classify_status(code).unwrap();
            assert_eq!(is_error(code).unwrap(), class.is_error());
            assert_eq!(is_error(code).unwrap(), code >= 400);
        }
    }

    #[test]
    fn field_names_round_trip() {
        for f in Field::ALL {
            assert_eq!(f.name().parse::<Field>().unwrap(), f);
        }
        assert_eq!("Device Brand".parse::<Field>().unwrap(), Field::DeviceBrand);
        assert_eq!("live_channel".parse::<Field>().unwrap(), Field::LiveChannel);
        assert!("bogus".parse::<Field>().is_err());
        assert_eq!(Field::ALL.iter().map(|f| f.index()).collect::<Vec<_>>(), (0..28).collect::<Vec<_>>());
    }

    #[test]
    fn missing_is_a_category() {
        let rec = LogRecord::new(404, "h1", "GET", Utc::now()).unwrap();
        assert_eq!(rec.category(Field::DeviceBrand), MISSING);
        assert_eq!(rec.category(Field::ContentLength), MISSING);
        assert_eq!(rec.category(Field::Hit), MISSING);
        assert_eq!(rec.category(Field::Method), "GET");
        assert_eq!(rec.numeric(Field::TimeToServ), None);
        assert!(LogRecord::new(700, "h", "GET", Utc::now()).is_err());
    }

    #[test]
    fn hit_parsing() {
        assert_eq!(HitStatus::parse("HIT"), HitStatus::Hit);
        assert_eq!(HitStatus::parse("miss"), HitStatus::Miss);
        assert_eq!(HitStatus::parse("maybe"), HitStatus::Missing);
    }
}
