//! Scene/tracklet data model, JSON (de)serialization and validation, and
//! the optional flat-ground pinhole projection from image space.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Scalar;

/// Default cap on vehicles kept per scene, nearest to the ego first.
pub const DEFAULT_MAX_VEHICLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Vehicle,
    LaneMarking,
}

impl EntityKind {
    /// Row index in the entity embedding table.
    pub fn embedding_index(self) -> usize {
        match self {
            EntityKind::Vehicle => 0,
            EntityKind::LaneMarking => 1,
        }
    }
}

/// The six vehicle behavior classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehaviorClass {
    /// Moving away from us.
    MAU,
    /// Moving towards us.
    MTU,
    /// Parked.
    PRK,
    /// Lane change, left to right.
    LCL,
    /// Lane change, right to left.
    LCR,
    /// Overtake.
    OVT,
}

pub const NUM_CLASSES: usize = 6;

impl BehaviorClass {
    pub const ALL: [BehaviorClass; NUM_CLASSES] = [
        BehaviorClass::MAU,
        BehaviorClass::MTU,
        BehaviorClass::PRK,
        BehaviorClass::LCL,
        BehaviorClass::LCR,
        BehaviorClass::OVT,
    ];

    pub fn index(self) -> usize {
        match self {
            BehaviorClass::MAU => 0,
            BehaviorClass::MTU => 1,
            BehaviorClass::PRK => 2,
            BehaviorClass::LCL => 3,
            BehaviorClass::LCR => 4,
            BehaviorClass::OVT => 5,
        }
    }

    pub fn from_index(i: usize) -> BehaviorClass {
        BehaviorClass::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorClass::MAU => "MAU",
            BehaviorClass::MTU => "MTU",
            BehaviorClass::PRK => "PRK",
            BehaviorClass::LCL => "LCL",
            BehaviorClass::LCR => "LCR",
            BehaviorClass::OVT => "OVT",
        }
    }
}

impl std::fmt::Display for BehaviorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Bird's-eye-view point in the ego frame: x meters lateral (+x right of
/// ego heading), y meters longitudinal (+y forward of ego).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(Scalar, Scalar)", into = "(Scalar, Scalar)")]
pub struct Point {
    pub x: Scalar,
    pub y: Scalar,
}

impl Point {
    pub fn new(x: Scalar, y: Scalar) -> Self {
        Point { x, y }
    }

    pub fn dist_to_origin(self) -> Scalar {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

impl From<(Scalar, Scalar)> for Point {
    fn from((x, y): (Scalar, Scalar)) -> Self {
        Point { x, y }
    }
}

impl From<Point> for (Scalar, Scalar) {
    fn from(p: Point) -> Self {
        (p.x, p.y)
    }
}

/// A tracked entity's reference-point trajectory over the scene's T frames.
/// Missing detections are `None`; frame alignment is positional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Track {
    pub id: String,
    pub kind: EntityKind,
    #[serde(default)]
    pub label: Option<BehaviorClass>,
    pub points: Vec<Option<Point>>,
}

impl Track {
    pub fn present_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|_| i))
    }

    pub fn first_present(&self) -> Option<(usize, Point)> {
        self.points
            .iter()
            .enumerate()
            .find_map(|(i, p)| p.map(|p| (i, p)))
    }
}

/// Optional extra block emitted by the synthetic generator; loaders that do
/// not need it ignore it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    /// (overtaker track id, overtaken track id) pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness_pairs: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<Scalar>,
}

/// A fixed-length clip: T frames of BEV reference points per tracked entity
/// plus per-vehicle ground-truth labels on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub id: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub tracks: Vec<Track>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<SceneMetadata>,
}

impl Scene {
    pub fn vehicles(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.kind == EntityKind::Vehicle)
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.t < 2 {
            return Err(Error::Scene {
                scene: self.id.clone(),
                message: format!("T must be >= 2, got {}", self.t),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for track in &self.tracks {
            let fail = |message: String| Error::SceneValidation {
                scene: self.id.clone(),
                track: track.id.clone(),
                message,
            };
            if !seen.insert(&track.id) {
                return Err(fail("duplicate track id".to_string()));
            }
            if track.points.len() != self.t {
                return Err(fail(format!(
                    "track has {} points, scene T is {}",
                    track.points.len(),
                    self.t
                )));
            }
            if track.present_frames().count() < 2 {
                return Err(fail("fewer than 2 present points".to_string()));
            }
            if track.kind == EntityKind::LaneMarking && track.label.is_some() {
                return Err(fail("lane marking track carries a label".to_string()));
            }
            for p in track.points.iter().flatten() {
                if !p.x.is_finite() || !p.y.is_finite() {
                    return Err(fail("non-finite point coordinate".to_string()));
                }
            }
        }
        Ok(())
    }

    /// Drops vehicles beyond `max_vehicles`, keeping those nearest to the
    /// ego (origin) at their first present frame; ties break on track id.
    pub fn truncate_vehicles(&mut self, max_vehicles: usize) {
        let mut vehicles: Vec<(Scalar, String)> = self
            .vehicles()
            .map(|t| {
                let (_, p) = t.first_present().expect("validated track has points");
                (p.dist_to_origin(), t.id.clone())
            })
            .collect();
        if vehicles.len() <= max_vehicles {
            return;
        }
        vehicles.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        let keep: std::collections::BTreeSet<String> =
            vehicles.into_iter().take(max_vehicles).map(|(_, id)| id).collect();
        self.tracks
            .retain(|t| t.kind != EntityKind::Vehicle || keep.contains(&t.id));
    }
}

fn parse_scene(text: &str, origin: &str) -> Result<Scene, Error> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("{}: {}", origin, e)))
}

/// Loads scenes from a single `.json` file, a `.jsonl` corpus (one scene
/// per line), or a directory of such files (sorted by name). Scenes are
/// validated and vehicle-truncated.
pub fn load_scenes(path: &Path) -> Result<Vec<Scene>, Error> {
    load_scenes_with(path, DEFAULT_MAX_VEHICLES)
}

pub fn load_scenes_with(path: &Path, max_vehicles: usize) -> Result<Vec<Scene>, Error> {
    let mut scenes = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("json") | Some("jsonl")
                )
            })
            .collect();
        entries.sort();
        for entry in entries {
            scenes.extend(load_scenes_with(&entry, max_vehicles)?);
        }
        return Ok(scenes);
    }
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let name = path.display().to_string();
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            scenes.push(parse_scene(line, &format!("{}:{}", name, lineno + 1))?);
        }
    } else {
        scenes.push(parse_scene(&text, &name)?);
    }
    for scene in &mut scenes {
        scene.validate()?;
        scene.truncate_vehicles(max_vehicles);
    }
    Ok(scenes)
}

pub fn save_scenes_jsonl(scenes: &[Scene], path: &Path) -> Result<(), Error> {
    let mut out = String::new();
    for scene in scenes {
        out.push_str(&serde_json::to_string(scene).expect("scene serialization cannot fail"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Pinhole camera over a flat ground plane, used to lift image-space
/// tracks into the ego BEV frame.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal: Scalar,
    /// Principal point (u, v) in pixels.
    pub principal: (Scalar, Scalar),
    /// Camera height above the ground plane, meters.
    pub height: Scalar,
    /// Downward pitch of the optical axis, radians.
    pub pitch: Scalar,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), Error> {
        if self.height <= 0.0 || self.focal <= 0.0 {
            return Err(Error::Config(
                "camera height and focal length must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Intersects the pixel's viewing ray with the ground plane and returns
    /// the hit in the ego frame.
    pub fn ground_project(&self, pixel: (Scalar, Scalar)) -> Result<Point, Error> {
        let (u, v) = pixel;
        let xc = (u - self.principal.0) / self.focal;
        let yc = (v - self.principal.1) / self.focal;
        let (sin_p, cos_p) = self.pitch.sin_cos();
        // Descent rate of the ray; non-positive means it never hits ground.
        let denom = sin_p + yc * cos_p;
        if denom <= 0.0 {
            return Err(Error::NoGroundIntersection);
        }
        let t = self.height / denom;
        Ok(Point::new(t * xc, t * (cos_p - yc * sin_p)))
    }

    /// Forward pinhole projection of a ground point to pixels. Inverse of
    /// [`CameraModel::ground_project`]; kept public as a test oracle.
    pub fn forward_project(&self, p: Point) -> (Scalar, Scalar) {
        let (sin_p, cos_p) = self.pitch.sin_cos();
        // Ego-frame offset from the camera center, rotated into camera axes.
        let (xw, yw, zw) = (p.x, p.y, -self.height);
        let zc = yw * cos_p - zw * sin_p;
        let yc = -(yw * sin_p + zw * cos_p);
        (
            self.principal.0 + self.focal * xw / zc,
            self.principal.1 + self.focal * yc / zc,
        )
    }
}
