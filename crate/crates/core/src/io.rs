//! Reading and writing `.catproj.json` project documents.
//!
//! Parsing is strict: unknown fields, unknown brick types, non-integer
//! numbers, and any validation failure are all errors. Serialization is
//! canonical (fixed field order, compact JSON), so equal projects always
//! produce identical bytes and therefore identical digests.

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::project::{
    validate, Brick, Costume, Project, Script, Sound, Sprite, StageConfig, Trigger, Violation,
    FORMAT_VERSION,
};

/// Bracket nesting allowed in a document before it is handed to the JSON
/// reader. A project at the brick-depth cap needs about 135 levels.
const MAX_JSON_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}: {message}", if path.is_empty() { "(document)" } else { path.as_str() })]
pub struct ParseError {
    /// Deepest failing node; empty for document-level failures.
    pub path: String,
    pub message: String,
}

impl ParseError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<Violation> for ParseError {
    fn from(v: Violation) -> Self {
        ParseError::new(v.path, v.kind.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("project is invalid: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
pub struct InvalidProject(pub Vec<Violation>);

pub(crate) fn ensure_valid(project: &Project) -> Result<(), InvalidProject> {
    let violations = validate(project);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(InvalidProject(violations))
    }
}

/// Parses a UTF-8 JSON value from `bytes` after bounding its nesting depth.
pub(crate) fn parse_json(bytes: &[u8]) -> Result<Value, ParseError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseError::new("", format!("invalid UTF-8: {e}")))?;
    if text.starts_with('\u{feff}') {
        return Err(ParseError::new("", "byte order mark is not allowed"));
    }
    if json_depth(text.as_bytes()) > MAX_JSON_DEPTH {
        return Err(ParseError::new("", "document nested too deeply"));
    }
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let value = serde::Deserialize::deserialize(&mut de)
        .and_then(|v: Value| de.end().map(|_| v))
        .map_err(|e| ParseError::new("", format!("malformed JSON: {e}")))?;
    Ok(value)
}

fn json_depth(bytes: &[u8]) -> usize {
    let (mut depth, mut max, mut in_str, mut escaped) = (0usize, 0usize, false, false);
    for &b in bytes {
        if in_str {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'[' | b'{' => {
                depth += 1;
                max = max.max(depth);
            }
            b']' | b'}' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    max
}

/// Parses the document structure without semantic checks, so that callers
/// can list every [`Violation`] rather than stop at the first.
pub fn parse_project_unvalidated(bytes: &[u8]) -> Result<Project, ParseError> {
    project_from_value(&parse_json(bytes)?)
}

pub fn parse_project(bytes: &[u8]) -> Result<Project, ParseError> {
    let project = parse_project_unvalidated(bytes)?;
    if let Some(v) = validate(&project).into_iter().next() {
        return Err(v.into());
    }
    Ok(project)
}

pub fn serialize_project(project: &Project) -> Result<Vec<u8>, InvalidProject> {
    ensure_valid(project)?;
    Ok(serde_json::to_vec(project).expect("project serialization is infallible"))
}

/// SHA-256 of the canonical serialization, as lowercase hex.
pub fn project_digest(project: &Project) -> Result<String, InvalidProject> {
    Ok(sha256_hex(&serialize_project(project)?))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// An object whose fields are consumed one by one; leftovers are errors.
pub(crate) struct Fields<'a> {
    map: &'a Map<String, Value>,
    path: String,
    seen: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    pub(crate) fn new(value: &'a Value, path: &str) -> Result<Self, ParseError> {
        match value {
            Value::Object(map) => Ok(Fields {
                map,
                path: path.to_string(),
                seen: Vec::new(),
            }),
            other => Err(ParseError::new(
                path,
                format!("expected object, found {}", kind_of(other)),
            )),
        }
    }

    pub(crate) fn child(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    pub(crate) fn optional(&mut self, key: &'static str) -> Option<(&'a Value, String)> {
        self.seen.push(key);
        self.map.get(key).map(|v| (v, self.child(key)))
    }

    pub(crate) fn required(
        &mut self,
        key: &'static str,
    ) -> Result<(&'a Value, String), ParseError> {
        self.optional(key)
            .ok_or_else(|| ParseError::new(self.child(key), "missing field"))
    }

    pub(crate) fn string(&mut self, key: &'static str) -> Result<String, ParseError> {
        let (v, path) = self.required(key)?;
        as_string(v, &path)
    }

    pub(crate) fn uint<T: TryFrom<u64>>(&mut self, key: &'static str) -> Result<T, ParseError> {
        let (v, path) = self.required(key)?;
        as_uint(v, &path)
    }

    pub(crate) fn int<T: TryFrom<i64>>(&mut self, key: &'static str) -> Result<T, ParseError> {
        let (v, path) = self.required(key)?;
        let n = match v {
            Value::Number(n) if n.is_i64() => n.as_i64().unwrap(),
            Value::Number(n) if n.is_u64() => {
                return Err(ParseError::new(path, "integer out of range"));
            }
            other => return Err(type_error(&path, "integer", other)),
        };
        T::try_from(n).map_err(|_| ParseError::new(path, "integer out of range"))
    }

    pub(crate) fn array(&mut self, key: &'static str) -> Result<(&'a [Value], String), ParseError> {
        let (v, path) = self.required(key)?;
        match v {
            Value::Array(items) => Ok((items, path)),
            other => Err(type_error(&path, "array", other)),
        }
    }

    /// Fails on the first key (in document order) that was never requested.
    pub(crate) fn finish(self) -> Result<(), ParseError> {
        match self.map.keys().find(|k| !self.seen.contains(&k.as_str())) {
            Some(extra) => Err(ParseError::new(self.child(extra), "unknown field")),
            None => Ok(()),
        }
    }
}

pub(crate) fn as_string(v: &Value, path: &str) -> Result<String, ParseError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        other => Err(type_error(path, "string", other)),
    }
}

pub(crate) fn as_uint<T: TryFrom<u64>>(v: &Value, path: &str) -> Result<T, ParseError> {
    let n = match v {
        Value::Number(n) if n.is_u64() => n.as_u64().unwrap(),
        Value::Number(n) if n.is_i64() => {
            return Err(ParseError::new(path, "expected non-negative integer"));
        }
        other => return Err(type_error(path, "non-negative integer", other)),
    };
    T::try_from(n).map_err(|_| ParseError::new(path, "integer out of range"))
}

pub(crate) fn type_error(path: &str, expected: &str, found: &Value) -> ParseError {
    ParseError::new(
        path,
        format!("expected {expected}, found {}", kind_of(found)),
    )
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "non-integer number",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn project_from_value(value: &Value) -> Result<Project, ParseError> {
    let mut f = Fields::new(value, "")?;
    let format_version: u32 = f.uint("format_version")?;
    if format_version != FORMAT_VERSION {
        return Err(ParseError::new(
            "format_version",
            format!("unsupported format_version {format_version}, expected {FORMAT_VERSION}"),
        ));
    }
    let name = f.string("name")?;
    let (stage_value, stage_path) = f.required("stage")?;
    let stage = stage_from_value(stage_value, &stage_path)?;
    let (items, path) = f.array("sprites")?;
    let sprites = items
        .iter()
        .enumerate()
        .map(|(i, v)| sprite_from_value(v, &format!("{path}[{i}]")))
        .collect::<Result<_, _>>()?;
    f.finish()?;
    Ok(Project {
        format_version,
        name,
        stage,
        sprites,
    })
}

fn stage_from_value(value: &Value, path: &str) -> Result<StageConfig, ParseError> {
    let mut f = Fields::new(value, path)?;
    let stage = StageConfig {
        width: f.uint("width")?,
        height: f.uint("height")?,
        tick_rate: f.uint("tick_rate")?,
    };
    f.finish()?;
    Ok(stage)
}

fn sprite_from_value(value: &Value, path: &str) -> Result<Sprite, ParseError> {
    let mut f = Fields::new(value, path)?;
    let name = f.string("name")?;
    let (items, p) = f.array("costumes")?;
    let costumes = items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (id, file) = asset_from_value(v, &format!("{p}[{i}]"))?;
            Ok(Costume { id, file })
        })
        .collect::<Result<_, ParseError>>()?;
    let (items, p) = f.array("sounds")?;
    let sounds = items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (id, file) = asset_from_value(v, &format!("{p}[{i}]"))?;
            Ok(Sound { id, file })
        })
        .collect::<Result<_, ParseError>>()?;
    let (items, p) = f.array("scripts")?;
    let scripts = items
        .iter()
        .enumerate()
        .map(|(i, v)| script_from_value(v, &format!("{p}[{i}]")))
        .collect::<Result<_, _>>()?;
    f.finish()?;
    Ok(Sprite {
        name,
        costumes,
        sounds,
        scripts,
    })
}

fn asset_from_value(value: &Value, path: &str) -> Result<(String, String), ParseError> {
    let mut f = Fields::new(value, path)?;
    let id = f.string("id")?;
    let file = f.string("file")?;
    f.finish()?;
    Ok((id, file))
}

fn script_from_value(value: &Value, path: &str) -> Result<Script, ParseError> {
    let mut f = Fields::new(value, path)?;
    let (tv, tp) = f.required("trigger")?;
    let trigger = trigger_from_value(tv, &tp)?;
    let (items, p) = f.array("bricks")?;
    let bricks = bricks_from_values(items, &p)?;
    f.finish()?;
    Ok(Script { trigger, bricks })
}

fn trigger_from_value(value: &Value, path: &str) -> Result<Trigger, ParseError> {
    let mut f = Fields::new(value, path)?;
    let kind = f.string("type")?;
    let trigger = match kind.as_str() {
        "WhenProgramStarts" => Trigger::WhenProgramStarts,
        "WhenTapped" => Trigger::WhenTapped,
        "WhenIReceive" => Trigger::WhenIReceive {
            message: f.string("message")?,
        },
        other => {
            return Err(ParseError::new(
                f.child("type"),
                format!("unknown trigger type {other:?}"),
            ))
        }
    };
    f.finish()?;
    Ok(trigger)
}

fn bricks_from_values(items: &[Value], path: &str) -> Result<Vec<Brick>, ParseError> {
    items
        .iter()
        .enumerate()
        .map(|(i, v)| brick_from_value(v, &format!("{path}[{i}]")))
        .collect()
}

fn brick_from_value(value: &Value, path: &str) -> Result<Brick, ParseError> {
    let mut f = Fields::new(value, path)?;
    let kind = f.string("type")?;
    let brick = match kind.as_str() {
        "Wait" => Brick::Wait {
            millis: f.uint("millis")?,
        },
        "Broadcast" => Brick::Broadcast {
            message: f.string("message")?,
        },
        "BroadcastAndWait" => Brick::BroadcastAndWait {
            message: f.string("message")?,
        },
        "PlaceAt" => Brick::PlaceAt {
            x: f.int("x")?,
            y: f.int("y")?,
        },
        "GlideTo" => Brick::GlideTo {
            x: f.int("x")?,
            y: f.int("y")?,
            millis: f.uint("millis")?,
        },
        "ChangeXBy" => Brick::ChangeXBy { dx: f.int("dx")? },
        "ChangeYBy" => Brick::ChangeYBy { dy: f.int("dy")? },
        "PlaceAtRandom" => Brick::PlaceAtRandom {
            xmin: f.int("xmin")?,
            xmax: f.int("xmax")?,
            ymin: f.int("ymin")?,
            ymax: f.int("ymax")?,
        },
        "SetCostume" => Brick::SetCostume {
            costume_id: f.string("costume_id")?,
        },
        "NextCostume" => Brick::NextCostume,
        "Show" => Brick::Show,
        "Hide" => Brick::Hide,
        "SetSize" => Brick::SetSize {
            percent: f.uint("percent")?,
        },
        "ComeToFront" => Brick::ComeToFront,
        "PlaySound" => Brick::PlaySound {
            sound_id: f.string("sound_id")?,
        },
        "Speak" => Brick::Speak {
            text: f.string("text")?,
        },
        "Repeat" => {
            let count = f.uint("count")?;
            let (items, p) = f.array("body")?;
            Brick::Repeat {
                count,
                body: bricks_from_values(items, &p)?,
            }
        }
        "Forever" => {
            let (items, p) = f.array("body")?;
            Brick::Forever {
                body: bricks_from_values(items, &p)?,
            }
        }
        other => {
            return Err(ParseError::new(
                f.child("type"),
                format!("unknown brick type {other:?}"),
            ))
        }
    };
    f.finish()?;
    Ok(brick)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HELLO: &str = r#"{"format_version":1,"name":"Hello","stage":{"width":480,"height":800,"tick_rate":30},"sprites":[{"name":"Background","costumes":[{"id":"bg0","file":"images/bg0.png"}],"sounds":[],"scripts":[{"trigger":{"type":"WhenProgramStarts"},"bricks":[{"type":"SetCostume","costume_id":"bg0"},{"type":"Speak","text":"Hello world!"}]}]}]}"#;

    #[test]
    fn parses_hello_world_shape() {
        let p = parse_project(HELLO.as_bytes()).unwrap();
        assert_eq!(p.sprites.len(), 1);
        assert_eq!(p.sprites[0].name, "Background");
        assert_eq!(
            p.sprites[0].scripts[0].bricks,
            vec![
                Brick::SetCostume {
                    costume_id: "bg0".into()
                },
                Brick::Speak {
                    text: "Hello world!".into()
                }
            ]
        );
    }

    #[test]
    fn canonical_bytes_match_input_fixture() {
        let p = parse_project(HELLO.as_bytes()).unwrap();
        assert_eq!(serialize_project(&p).unwrap(), HELLO.as_bytes());
    }

    #[test]
    fn rejects_other_versions() {
        let doc = HELLO.replace(r#""format_version":1"#, r#""format_version":2"#);
        assert_eq!(
            parse_project(doc.as_bytes()).unwrap_err().path,
            "format_version"
        );
    }

    #[test]
    fn repeat_count_must_be_integer() {
        let doc = HELLO.replace(
            r#"{"type":"Speak","text":"Hello world!"}"#,
            r#"{"type":"Repeat","count":"three","body":[]}"#,
        );
        let err = parse_project(doc.as_bytes()).unwrap_err();
        assert_eq!(err.path, "sprites[0].scripts[0].bricks[1].count");
    }

    #[test]
    fn rejects_floats_and_negatives_where_unsigned() {
        let doc = HELLO.replace(r#""width":480"#, r#""width":480.0"#);
        assert_eq!(
            parse_project(doc.as_bytes()).unwrap_err().path,
            "stage.width"
        );
        let doc = HELLO.replace(r#""width":480"#, r#""width":-4"#);
        assert_eq!(
            parse_project(doc.as_bytes()).unwrap_err().path,
            "stage.width"
        );
    }

    #[test]
    fn unknown_fields_and_types() {
        let doc = HELLO.replace(r#""name":"Hello","#, r#""name":"Hello","extra":0,"#);
        assert_eq!(parse_project(doc.as_bytes()).unwrap_err().path, "extra");
        let doc = HELLO.replace(r#""type":"Speak""#, r#""type":"Think""#);
        let err = parse_project(doc.as_bytes()).unwrap_err();
        assert_eq!(err.path, "sprites[0].scripts[0].bricks[1].type");
        assert!(err.message.contains("Think"));
    }

    #[test]
    fn validation_failures_become_parse_errors() {
        let doc = HELLO.replace(r#""costume_id":"bg0""#, r#""costume_id":"bg9""#);
        let err = parse_project(doc.as_bytes()).unwrap_err();
        assert_eq!(err.path, "sprites[0].scripts[0].bricks[0]");
    }

    #[test]
    fn malformed_text() {
        for doc in ["", "{", "[]", "null", "\u{feff}{}", "{\"a\":1} x"] {
            assert!(parse_project(doc.as_bytes()).is_err(), "{doc:?}");
        }
        assert!(parse_project(&[0xff, 0xfe]).is_err());
        let deep = "[".repeat(100_000);
        assert!(parse_project(deep.as_bytes()).is_err());
    }

    #[test]
    fn nested_loop_fixture() {
        let doc = HELLO.replace(
            r#"{"type":"Speak","text":"Hello world!"}"#,
            r#"{"type":"Repeat","count":3,"body":[{"type":"ChangeXBy","dx":10}]}"#,
        );
        let p = parse_project(doc.as_bytes()).unwrap();
        assert_eq!(
            p.sprites[0].scripts[0].bricks[1],
            Brick::Repeat {
                count: 3,
                body: vec![Brick::ChangeXBy { dx: 10 }]
            }
        );
        assert_eq!(serialize_project(&p).unwrap(), doc.as_bytes());
    }

    #[test]
    fn max_depth_project_roundtrips() {
        let mut b = Brick::Show;
        for _ in 1..64 {
            b = Brick::Forever { body: vec![b] };
        }
        let mut p = parse_project(HELLO.as_bytes()).unwrap();
        p.sprites[0].scripts[0].bricks = vec![b];
        let bytes = serialize_project(&p).unwrap();
        assert_eq!(parse_project(&bytes).unwrap(), p);
    }

    #[test]
    fn digest_is_sha256_of_canonical_bytes() {
        let p = parse_project(HELLO.as_bytes()).unwrap();
        let d = project_digest(&p).unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(d, sha256_hex(HELLO.as_bytes()));
        let mut q = p.clone();
        q.sprites[0].scripts[0].bricks[1] = Brick::Speak {
            text: "Hello world?".into(),
        };
        assert_ne!(project_digest(&q).unwrap(), d);
    }

    #[test]
    fn serialize_rejects_invalid() {
        let mut p = parse_project(HELLO.as_bytes()).unwrap();
        p.sprites.clear();
        assert!(serialize_project(&p).is_err());
    }
}
