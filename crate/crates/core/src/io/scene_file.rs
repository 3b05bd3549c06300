//! JSON scene descriptions.
//!
//! ```json
//! {
//!   "sample_rate": 8000,
//!   "duration_s": 2.0,
//!   "max_order": 1,
//!   "snr_db": 30,
//!   "room": {
//!     "dims": [8.2, 3.6, 2.4],
//!     "reflection": {"x_low": 0.1, "floor": [[250, 0.6], [1000, 0.5]], "default": 0.1},
//!     "sound_speed": 343,
//!     "surface_areas": [8.64, 8.64, 19.68, 19.68, 5.76, 29.52]
//!   },
//!   "array": {"circular": {"center": [4.1, 1.8, 1.2], "radius": 0.1, "count": 8}},
//!   "sources": [{"position": [3.0, 1.0, 1.2], "signal": "speech"}, {"position": [5, 2, 1.2], "wav": "s2.wav"}],
//!   "grid": {"spacing": 0.25, "height": 1.2, "margin": 0.0}
//! }
//! ```
//!
//! `room.reflection` is a number (all surfaces), an array of six numbers in
//! surface order, or an object keyed by surface name whose values are numbers
//! or `[hz, value]` tables; `default` fills unnamed surfaces. `array` is either
//! `{"positions": [[x, y, z], ...]}` or the circular form. Each source names a
//! WAV file (relative to the scene file) or a generated `speech`, `noise` or
//! `impulse` signal.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::scene::{MicArray, Point, ReflectionProfile, RoomSpec, Surface, DEFAULT_SOUND_SPEED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSpec {
    Speech,
    Noise,
    Impulse,
    Wav(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    pub position: Point,
    pub signal: SignalSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub spacing: f64,
    pub height: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub room: RoomSpec,
    pub array: MicArray,
    pub sources: Vec<SourceSpec>,
    pub grid: GridSpec,
    pub sample_rate: f64,
    pub duration_s: f64,
    pub max_order: i32,
    pub snr_db: Option<f64>,
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| schema(&format!("{path}.{key}"), "missing required field"))
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| schema(path, "expected a finite number"))
}

fn positive(v: &Value, path: &str) -> Result<f64> {
    let x = number(v, path)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(schema(path, format!("must be positive, got {x}")))
    }
}

fn opt_number(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => number(v, &format!("{path}.{key}")).map(Some),
    }
}

fn point(v: &Value, path: &str) -> Result<Point> {
    let a = v.as_array().ok_or_else(|| schema(path, "expected [x, y, z]"))?;
    if a.len() != 3 {
        return Err(schema(path, format!("expected 3 coordinates, got {}", a.len())));
    }
    Ok(Point::new(
        number(&a[0], &format!("{path}[0]"))?,
        number(&a[1], &format!("{path}[1]"))?,
        number(&a[2], &format!("{path}[2]"))?,
    ))
}

fn coefficient(v: &Value, path: &str) -> Result<f64> {
    let x = number(v, path)?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(schema(path, format!("reflection coefficient {x} outside [0, 1]")))
    }
}

fn profile(v: &Value, path: &str) -> Result<ReflectionProfile> {
    match v {
        Value::Array(rows) => {
            let mut pts = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                let p = format!("{path}[{i}]");
                let pair = r.as_array().filter(|a| a.len() == 2).ok_or_else(|| schema(&p, "expected [hz, value]"))?;
                pts.push((number(&pair[0], &format!("{p}[0]"))?, coefficient(&pair[1], &format!("{p}[1]"))?));
            }
            ReflectionProfile::table(pts).map_err(|e| schema(path, e.to_string()))
        }
        _ => ReflectionProfile::scalar(coefficient(v, path)?).map_err(|e| schema(path, e.to_string())),
    }
}

fn surfaces(v: &Value, path: &str) -> Result<[ReflectionProfile; 6]> {
    match v {
        Value::Number(_) => {
            let p = profile(v, path)?;
            Ok(std::array::from_fn(|_| p.clone()))
        }
        Value::Array(a) => {
            if a.len() != 6 {
                return Err(schema(path, format!("expected 6 per-surface values, got {}", a.len())));
            }
            let mut out = Vec::with_capacity(6);
            for (i, x) in a.iter().enumerate() {
                out.push(profile(x, &format!("{path}[{i}]"))?);
            }
            Ok(out.try_into().expect("six profiles"))
        }
        Value::Object(obj) => {
            for k in obj.keys() {
                if k != "default" && !Surface::ALL.iter().any(|s| s.name() == k) {
                    return Err(schema(&format!("{path}.{k}"), "unknown surface name"));
                }
            }
            let default = match obj.get("default") {
                Some(d) => Some(profile(d, &format!("{path}.default"))?),
                None => None,
            };
            let mut out = Vec::with_capacity(6);
            for s in Surface::ALL {
                let p = match obj.get(s.name()) {
                    Some(x) => profile(x, &format!("{path}.{}", s.name()))?,
                    None => default
                        .clone()
                        .ok_or_else(|| schema(&format!("{path}.{}", s.name()), "missing surface and no default"))?,
                };
                out.push(p);
            }
            Ok(out.try_into().expect("six profiles"))
        }
        _ => Err(schema(path, "expected a number, an array of six or an object")),
    }
}

fn room(v: &Value) -> Result<RoomSpec> {
    let path = "$.room";
    let obj = object(v, path)?;
    let dims = point(field(obj, "dims", path)?, "$.room.dims")?;
    for (i, d) in [dims.x, dims.y, dims.z].iter().enumerate() {
        if !(*d > 0.0) {
            return Err(schema(&format!("$.room.dims[{i}]"), "dimensions must be positive"));
        }
    }
    let profiles = surfaces(field(obj, "reflection", path)?, "$.room.reflection")?;
    let c = opt_number(obj, "sound_speed", path)?.unwrap_or(DEFAULT_SOUND_SPEED);
    let mut room = RoomSpec::new(dims, profiles, c).map_err(|e| schema(path, e.to_string()))?;
    if let Some(a) = obj.get("surface_areas") {
        let arr = a
            .as_array()
            .filter(|x| x.len() == 6)
            .ok_or_else(|| schema("$.room.surface_areas", "expected 6 areas"))?;
        let mut areas = [0.0; 6];
        for (i, x) in arr.iter().enumerate() {
            areas[i] = positive(x, &format!("$.room.surface_areas[{i}]"))?;
        }
        room = room.with_surface_areas(areas).map_err(|e| schema("$.room.surface_areas", e.to_string()))?;
    }
    Ok(room)
}

fn array(v: &Value, room: &RoomSpec) -> Result<MicArray> {
    let path = "$.array";
    let obj = object(v, path)?;
    let arr = if let Some(c) = obj.get("circular") {
        let p = "$.array.circular";
        let co = object(c, p)?;
        let center = point(field(co, "center", p)?, "$.array.circular.center")?;
        let radius = positive(field(co, "radius", p)?, "$.array.circular.radius")?;
        let count = field(co, "count", p)?
            .as_u64()
            .ok_or_else(|| schema("$.array.circular.count", "expected a positive integer"))?;
        MicArray::circular(center, radius, count as usize).map_err(|e| schema(p, e.to_string()))?
    } else {
        let list = field(obj, "positions", path)?
            .as_array()
            .ok_or_else(|| schema("$.array.positions", "expected a list of points"))?;
        let pts = list
            .iter()
            .enumerate()
            .map(|(i, p)| point(p, &format!("$.array.positions[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        MicArray::new(pts).map_err(|e| schema("$.array.positions", e.to_string()))?
    };
    for (i, p) in arr.positions().iter().enumerate() {
        if !room.contains_strictly(p) {
            return Err(schema(&format!("$.array.positions[{i}]"), "microphone outside the room"));
        }
    }
    Ok(arr)
}

fn sources(v: &Value, room: &RoomSpec, base: &Path) -> Result<Vec<SourceSpec>> {
    let list = v.as_array().ok_or_else(|| schema("$.sources", "expected a list"))?;
    if list.is_empty() {
        return Err(schema("$.sources", "at least one source is required"));
    }
    list.iter()
        .enumerate()
        .map(|(i, s)| {
            let path = format!("$.sources[{i}]");
            let obj = object(s, &path)?;
            let position = point(field(obj, "position", &path)?, &format!("{path}.position"))?;
            if !room.contains_strictly(&position) {
                return Err(schema(&format!("{path}.position"), "source outside the room"));
            }
            let signal = match (obj.get("wav"), obj.get("signal")) {
                (Some(w), None) => {
                    let p = w.as_str().ok_or_else(|| schema(&format!("{path}.wav"), "expected a path"))?;
                    SignalSpec::Wav(base.join(p))
                }
                (None, Some(k)) => match k.as_str() {
                    Some("speech") => SignalSpec::Speech,
                    Some("noise") => SignalSpec::Noise,
                    Some("impulse") => SignalSpec::Impulse,
                    _ => return Err(schema(&format!("{path}.signal"), "expected speech, noise or impulse")),
                },
                (None, None) => SignalSpec::Speech,
                (Some(_), Some(_)) => return Err(schema(&path, "give either wav or signal, not both")),
            };
            Ok(SourceSpec { position, signal })
        })
        .collect()
}

/// Validates and converts a scene document; `base` resolves relative WAV paths.
pub fn parse_scene(doc: &Value, base: &Path) -> Result<SceneConfig> {
    let top = object(doc, "$")?;
    let room = room(field(top, "room", "$")?)?;
    let array = array(field(top, "array", "$")?, &room)?;
    let sources = sources(field(top, "sources", "$")?, &room, base)?;
    let grid = match top.get("grid") {
        None => GridSpec {
            spacing: 0.25,
            height: array.centroid().z,
            margin: 0.0,
        },
        Some(g) => {
            let o = object(g, "$.grid")?;
            GridSpec {
                spacing: positive(field(o, "spacing", "$.grid")?, "$.grid.spacing")?,
                height: number(field(o, "height", "$.grid")?, "$.grid.height")?,
                margin: opt_number(o, "margin", "$.grid")?.unwrap_or(0.0),
            }
        }
    };
    if !(grid.height > 0.0 && grid.height < room.dims().z) {
        return Err(schema("$.grid.height", "grid plane must lie inside the room"));
    }
    let sample_rate = match top.get("sample_rate") {
        Some(v) => positive(v, "$.sample_rate")?,
        None => 16000.0,
    };
    let duration_s = match top.get("duration_s") {
        Some(v) => positive(v, "$.duration_s")?,
        None => 2.0,
    };
    let max_order = match top.get("max_order") {
        Some(v) => v
            .as_i64()
            .filter(|o| (0..=20).contains(o))
            .ok_or_else(|| schema("$.max_order", "expected an integer in 0..=20"))? as i32,
        None => 1,
    };
    let snr_db = opt_number(top, "snr_db", "$")?;
    Ok(SceneConfig {
        room,
        array,
        sources,
        grid,
        sample_rate,
        duration_s,
        max_order,
        snr_db,
    })
}

pub fn read_scene(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| schema("$", format!("invalid JSON: {e}")))?;
    parse_scene(&doc, path.parent().unwrap_or(Path::new(".")))
}

impl SceneConfig {
    /// Scene document in the canonical form accepted by [`parse_scene`].
    pub fn to_json(&self) -> Value {
        let p = |p: &Point| json!([p.x, p.y, p.z]);
        let mut refl = Map::new();
        for s in Surface::ALL {
            let prof = self.room.surface(s);
            let v = if prof.is_scalar() {
                json!(prof.points()[0].1)
            } else {
                json!(prof.points().iter().map(|(f, v)| json!([f, v])).collect::<Vec<_>>())
            };
            refl.insert(s.name().to_string(), v);
        }
        let mut room = json!({
            "dims": p(&self.room.dims()),
            "reflection": Value::Object(refl),
            "sound_speed": self.room.sound_speed(),
        });
        if let Some(a) = self.room.surface_areas() {
            room["surface_areas"] = json!(a);
        }
        let sources: Vec<Value> = self
            .sources
            .iter()
            .map(|s| match &s.signal {
                SignalSpec::Wav(path) => json!({"position": p(&s.position), "wav": path.to_string_lossy()}),
                SignalSpec::Speech => json!({"position": p(&s.position), "signal": "speech"}),
                SignalSpec::Noise => json!({"position": p(&s.position), "signal": "noise"}),
                SignalSpec::Impulse => json!({"position": p(&s.position), "signal": "impulse"}),
            })
            .collect();
        json!({
            "sample_rate": self.sample_rate,
            "duration_s": self.duration_s,
            "max_order": self.max_order,
            "snr_db": self.snr_db,
            "room": room,
            "array": {"positions": self.array.positions().iter().map(p).collect::<Vec<_>>()},
            "sources": sources,
            "grid": {"spacing": self.grid.spacing, "height": self.grid.height, "margin": self.grid.margin},
        })
    }
}
