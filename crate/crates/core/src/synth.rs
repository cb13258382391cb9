//! Synthetic labeled-scene generator covering all six behavior classes,
//! plus corpus split and label-subsampling utilities.
//!
//! Kinematics are straight-line constant-speed segments with a smoothstep
//! lateral profile for lane changes; the ego drives straight at constant
//! speed. Labels are assigned on the noise-free kinematics, then position
//! noise and frame dropout are applied.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::stream_rng;
use crate::scene::{
    BehaviorClass, EntityKind, Point, Scene, SceneMetadata, Track, NUM_CLASSES,
};
use crate::Scalar;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub scenes_per_class: usize,
    /// Frames per scene.
    pub t: usize,
    /// Seconds per frame.
    pub dt: Scalar,
    /// Ego speed range, m/s.
    pub ego_speed: (Scalar, Scalar),
    /// Extra speed of a receding (MAU / overtaken) vehicle over ego, m/s.
    pub recede_speed: (Scalar, Scalar),
    /// Absolute world speed of an oncoming (MTU) vehicle, m/s.
    pub oncoming_speed: (Scalar, Scalar),
    pub lane_width: Scalar,
    /// Lane-marking tracks per scene.
    pub lanes_per_scene: (usize, usize),
    /// Position noise standard deviation, meters.
    pub noise_sigma: Scalar,
    /// Per-frame probability that a detection is missing.
    pub dropout: Scalar,
    /// Probability that a scene gains 1-2 parked background vehicles.
    pub ambient_parked_prob: Scalar,
    pub max_vehicles: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            scenes_per_class: 400,
            t: 10,
            dt: 0.1,
            ego_speed: (8.0, 14.0),
            recede_speed: (2.0, 6.0),
            oncoming_speed: (8.0, 14.0),
            lane_width: 3.5,
            lanes_per_scene: (3, 5),
            noise_sigma: 0.3,
            dropout: 0.05,
            ambient_parked_prob: 0.35,
            max_vehicles: 10,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let range_ok = |r: (Scalar, Scalar)| r.0 <= r.1 && r.0 > 0.0;
        if self.t < 2 {
            return Err(Error::Config("T must be >= 2".to_string()));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config("dt must be positive".to_string()));
        }
        if !range_ok(self.ego_speed) || !range_ok(self.recede_speed) || !range_ok(self.oncoming_speed)
        {
            return Err(Error::Config("speed ranges must be non-empty and positive".to_string()));
        }
        if self.lanes_per_scene.0 < 2 || self.lanes_per_scene.0 > self.lanes_per_scene.1 {
            return Err(Error::Config(
                "lanes_per_scene must be a non-empty range with at least 2 lanes".to_string(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be >= 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.dropout) || !(0.0..=1.0).contains(&self.ambient_parked_prob)
        {
            return Err(Error::Config("probabilities must lie in [0,1]".to_string()));
        }
        if self.max_vehicles < 2 {
            // Overtake scenes need an overtaken vehicle.
            return Err(Error::Config(
                "max_vehicles must be >= 2 (overtake scenes need a vehicle pair)".to_string(),
            ));
        }
        Ok(())
    }

    fn duration(&self) -> Scalar {
        (self.t - 1) as Scalar * self.dt
    }
}

fn sample(rng: &mut impl Rng, range: (Scalar, Scalar)) -> Scalar {
    // Tolerates degenerate (or rounding-inverted) ranges.
    if range.1 <= range.0 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

fn smoothstep(u: Scalar) -> Scalar {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Noise-free world-frame trajectory of one entity.
struct Motion {
    x0: Scalar,
    y0: Scalar,
    vx_profile: Option<(Scalar, Scalar)>, // (target x, duration) smoothstep lane change
    vy: Scalar,
}

impl Motion {
    fn still(x: Scalar, y: Scalar) -> Motion {
        Motion {
            x0: x,
            y0: y,
            vx_profile: None,
            vy: 0.0,
        }
    }

    fn forward(x: Scalar, y: Scalar, vy: Scalar) -> Motion {
        Motion {
            x0: x,
            y0: y,
            vx_profile: None,
            vy,
        }
    }

    fn lane_change(x0: Scalar, x1: Scalar, duration: Scalar, y: Scalar, vy: Scalar) -> Motion {
        Motion {
            x0,
            y0: y,
            vx_profile: Some((x1, duration)),
            vy,
        }
    }

    fn at(&self, t: Scalar) -> (Scalar, Scalar) {
        let x = match self.vx_profile {
            Some((x1, d)) => self.x0 + (x1 - self.x0) * smoothstep(t / d),
            None => self.x0,
        };
        (x, self.y0 + self.vy * t)
    }
}

struct SceneDraft {
    /// (track id, kind, label, motion); vehicles first, actor first of all.
    entities: Vec<(String, EntityKind, Option<BehaviorClass>, Motion)>,
    witness_pairs: Vec<(String, String)>,
}

/// Margin between lane dashes and the boundaries of a vehicle's swept
/// y-interval. Decisive without noise, but comparable to the noise scale so
/// that borderline crossings occasionally flip on noisy corpora.
const Y_MARGIN: Scalar = 0.6;
/// Lateral dash offset range from a reference line. The low end sits near
/// the hysteresis deadband, making lateral relations borderline under noise.
const LAT_RANGE: (Scalar, Scalar) = (0.35, 0.95);
/// Length cap of the informative dash field along y, short enough that a
/// second vehicle can sweep the whole field within one clip.
const FIELD_SPAN: Scalar = 4.5;

fn lateral(rng: &mut impl Rng) -> Scalar {
    let m = rng.gen_range(LAT_RANGE.0..LAT_RANGE.1);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn side_sign(rng: &mut impl Rng) -> Scalar {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Split the lane budget into informative dashes and no-change distractors.
/// The informative count is never smaller, so the informative relation wins
/// the per-vehicle majority vote (ties break away from no-change).
fn split_dashes(n: usize) -> (usize, usize) {
    (n - n / 2, n / 2)
}

/// An oncoming vehicle whose downward sweep covers `field` with margin.
fn oncoming_over(
    cfg: &SynthConfig,
    field: (Scalar, Scalar),
    x: Scalar,
    rng: &mut impl Rng,
) -> Motion {
    let vo = sample(rng, cfg.oncoming_speed);
    let y0 = field.1 + Y_MARGIN + rng.gen_range(0.2..0.8);
    Motion::forward(x, y0, -vo)
}

fn dash_positions(
    rng: &mut impl Rng,
    n: usize,
    y_range: (Scalar, Scalar),
) -> Vec<Scalar> {
    // Evenly spread with jitter; keeps dashes strictly inside the range.
    let span = y_range.1 - y_range.0;
    (0..n)
        .map(|i| {
            let center = y_range.0 + span * (i as Scalar + 0.5) / n as Scalar;
            let jitter = span / n as Scalar * 0.3;
            center + rng.gen_range(-jitter..jitter)
        })
        .collect()
}

fn draft_scene(
    cfg: &SynthConfig,
    class: BehaviorClass,
    ve: Scalar,
    rng: &mut impl Rng,
) -> SceneDraft {
    let w = cfg.lane_width;
    let dur = cfg.duration();
    let n_lanes = rng.gen_range(cfg.lanes_per_scene.0..=cfg.lanes_per_scene.1);
    let mut entities: Vec<(String, EntityKind, Option<BehaviorClass>, Motion)> = Vec::new();
    let mut witness_pairs = Vec::new();

    // Note: tracks are stored ego-relative later; the ego itself is not a
    // track. Pairwise relations are translation-invariant, so the layout
    // below reasons purely in the world frame.
    let mut dashes: Vec<(Scalar, Scalar)> = Vec::new(); // (x, y)
    match class {
        BehaviorClass::MAU => {
            let lane = [-1.0, 0.0, 1.0][rng.gen_range(0..3)] * w;
            let va = ve + sample(rng, cfg.recede_speed);
            let y0 = rng.gen_range(2.0..8.0);
            let sweep_end = y0 + va * dur;
            entities.push((
                "actor".to_string(),
                EntityKind::Vehicle,
                Some(class),
                Motion::forward(lane, y0, va),
            ));
            // Optional second mover: a same-direction car behind the actor
            // (spaced so their order never flips noise-free) or an oncoming
            // car crossing the dash field.
            let mover = rng.gen_range(0..3);
            let mut common_top = sweep_end;
            let mut zone_top = sweep_end;
            let mut amb: Option<(BehaviorClass, Motion)> = None;
            if mover == 1 {
                let va2 = ve + sample(rng, cfg.recede_speed);
                let gap = (va - va2).abs() * dur + rng.gen_range(0.6..1.6);
                let amb_end = y0 - gap + va2 * dur;
                common_top = common_top.min(amb_end);
                zone_top = zone_top.max(amb_end);
                amb = Some((
                    BehaviorClass::MAU,
                    Motion::forward(lane + w * side_sign(rng), y0 - gap, va2),
                ));
            }
            let span = FIELD_SPAN.min(common_top - y0 - 2.0 * Y_MARGIN);
            let yf0 = sample(rng, (y0 + Y_MARGIN, common_top - Y_MARGIN - span));
            let field = (yf0, yf0 + span);
            if mover == 2 {
                let m = oncoming_over(cfg, field, lane + w * side_sign(rng), rng);
                zone_top = zone_top.max(m.y0);
                amb = Some((BehaviorClass::MTU, m));
            }
            let (n_inf, n_dis) = split_dashes(n_lanes);
            for y in dash_positions(rng, n_inf, field) {
                dashes.push((lane + lateral(rng), y));
            }
            let top = zone_top + 1.6;
            for y in dash_positions(rng, n_dis, (top, top + 5.0)) {
                dashes.push((lane + lateral(rng), y));
            }
            if let Some((label, motion)) = amb {
                entities.push(("amb".to_string(), EntityKind::Vehicle, Some(label), motion));
            }
        }
        BehaviorClass::MTU => {
            let lane = -w * rng.gen_range(1..=2) as Scalar;
            let vo = sample(rng, cfg.oncoming_speed);
            let y_end = rng.gen_range(1.0..4.0);
            let y0 = y_end + vo * dur;
            entities.push((
                "actor".to_string(),
                EntityKind::Vehicle,
                Some(class),
                Motion::forward(lane, y0, -vo),
            ));
            // Optional second mover: another oncoming car, or a receding car
            // sweeping up through the dash field.
            let mover = rng.gen_range(0..3);
            let mut common = (y_end, y0);
            let mut zone_bottom = y_end;
            let mut amb: Option<(BehaviorClass, Motion)> = None;
            if mover == 1 {
                let vo2 = sample(rng, cfg.oncoming_speed);
                let y0_2 = y0 + rng.gen_range(0.0..2.0);
                common.0 = common.0.max(y0_2 - vo2 * dur);
                zone_bottom = zone_bottom.min(y0_2 - vo2 * dur);
                amb = Some((
                    BehaviorClass::MTU,
                    Motion::forward(lane + w * side_sign(rng), y0_2, -vo2),
                ));
            }
            let span = FIELD_SPAN.min(common.1 - common.0 - 2.0 * Y_MARGIN);
            let yf0 = sample(rng, (common.0 + Y_MARGIN, common.1 - Y_MARGIN - span));
            let field = (yf0, yf0 + span);
            if mover == 2 {
                let va2 = ve + sample(rng, cfg.recede_speed);
                let ya0 = field.0 - Y_MARGIN - rng.gen_range(0.2..0.8);
                zone_bottom = zone_bottom.min(ya0);
                amb = Some((
                    BehaviorClass::MAU,
                    Motion::forward(lane + w * side_sign(rng), ya0, va2),
                ));
            }
            let (n_inf, n_dis) = split_dashes(n_lanes);
            for y in dash_positions(rng, n_inf, field) {
                dashes.push((lane + lateral(rng), y));
            }
            let bottom = zone_bottom - 1.6;
            for y in dash_positions(rng, n_dis, (bottom - 5.0, bottom)) {
                dashes.push((lane + lateral(rng), y));
            }
            if let Some((label, motion)) = amb {
                entities.push(("amb".to_string(), EntityKind::Vehicle, Some(label), motion));
            }
        }
        BehaviorClass::PRK => {
            let x = (w + rng.gen_range(0.0..1.0)) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let y0 = rng.gen_range(3.0..12.0);
            entities.push((
                "actor".to_string(),
                EntityKind::Vehicle,
                Some(class),
                Motion::still(x, y0),
            ));
            let yf0 = rng.gen_range(1.0..6.0);
            let field = (yf0, yf0 + FIELD_SPAN);
            let (n_inf, n_dis) = split_dashes(n_lanes);
            for y in dash_positions(rng, n_inf, field) {
                // Some dashes hug the parked car laterally, so its lateral
                // relations are borderline under noise.
                let xd = if rng.gen_bool(0.3) {
                    x + lateral(rng)
                } else {
                    (rng.gen_range(0..=3) as Scalar - 1.5) * w + lateral(rng)
                };
                dashes.push((xd, y));
            }
            // Optional mover sweeping the whole dash field, in either
            // direction; the parked actor is exempt from overtake logic.
            let mover = rng.gen_range(0..3);
            let mut zone = field;
            let mut amb: Option<(BehaviorClass, Motion)> = None;
            let x_m = [-1.0, 0.0, 1.0][rng.gen_range(0..3)] * w;
            if mover == 1 {
                let va2 = ve + sample(rng, cfg.recede_speed);
                let ya0 = field.0 - Y_MARGIN - rng.gen_range(0.2..0.8);
                zone.1 = zone.1.max(ya0 + va2 * dur);
                zone.0 = zone.0.min(ya0);
                amb = Some((BehaviorClass::MAU, Motion::forward(x_m, ya0, va2)));
            } else if mover == 2 {
                let m = oncoming_over(cfg, field, x_m, rng);
                zone.1 = zone.1.max(m.y0);
                zone.0 = zone.0.min(m.y0 + m.vy * dur);
                amb = Some((BehaviorClass::MTU, m));
            }
            let top = zone.1 + 1.6;
            for y in dash_positions(rng, n_dis, (top, top + 5.0)) {
                let xd = (rng.gen_range(0..=3) as Scalar - 1.5) * w + lateral(rng);
                dashes.push((xd, y));
            }
            if let Some((label, motion)) = amb {
                entities.push(("amb".to_string(), EntityKind::Vehicle, Some(label), motion));
            }
        }
        BehaviorClass::LCL | BehaviorClass::LCR => {
            let dir = if class == BehaviorClass::LCL { 1.0 } else { -1.0 };
            let x0 = if rng.gen_bool(0.5) { 0.0 } else { -dir * w };
            let x1 = x0 + dir * w;
            let vy = ve + rng.gen_range(-1.0..1.0);
            let y0 = rng.gen_range(3.0..8.0);
            entities.push((
                "actor".to_string(),
                EntityKind::Vehicle,
                Some(class),
                Motion::lane_change(x0, x1, dur, y0, vy),
            ));
            // Dashes sit ahead of the vehicle's entire sweep, so the only
            // axis that can flip is x. Informative dashes lie strictly
            // between the start and end lateral positions (crossed exactly
            // once); distractors sit just past either endpoint.
            let y_end = y0 + vy * dur;
            let field = (y_end + 1.0, y_end + 1.0 + FIELD_SPAN);
            let (n_inf, n_dis) = split_dashes(n_lanes);
            for y in dash_positions(rng, n_inf, field) {
                let xb = x0 + dir * rng.gen_range(LAT_RANGE.0..(w - LAT_RANGE.0));
                dashes.push((xb, y));
            }
            for y in dash_positions(rng, n_dis, field) {
                let m = rng.gen_range(LAT_RANGE.0..LAT_RANGE.1);
                let xd = if rng.gen_bool(0.5) {
                    x1 + dir * m
                } else {
                    x0 - dir * m
                };
                dashes.push((xd, y));
            }
            if rng.gen_bool(0.5) {
                entities.push((
                    "amb".to_string(),
                    EntityKind::Vehicle,
                    Some(BehaviorClass::MTU),
                    oncoming_over(cfg, field, x0 - dir * w, rng),
                ));
            }
        }
        BehaviorClass::OVT => {
            let vb = ve + rng.gen_range(-1.0..1.0);
            let yb0 = rng.gen_range(4.0..8.0);
            let gap = rng.gen_range(2.0..4.0);
            let lead = rng.gen_range(1.0..3.0);
            let va = vb + (gap + lead) / dur;
            let xa = w * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            entities.push((
                "actor".to_string(),
                EntityKind::Vehicle,
                Some(class),
                Motion::forward(xa, yb0 - gap, va),
            ));
            entities.push((
                "lead".to_string(),
                EntityKind::Vehicle,
                Some(BehaviorClass::MAU),
                Motion::forward(0.0, yb0, vb),
            ));
            witness_pairs.push(("actor".to_string(), "lead".to_string()));
            // Informative dashes sit between the two lanes, inside the
            // y-interval both cars sweep fully; distractors sit beyond it.
            let common = (yb0, yb0 + vb * dur);
            let span = FIELD_SPAN.min(common.1 - common.0 - 2.0 * Y_MARGIN);
            let yf0 = sample(rng, (common.0 + Y_MARGIN, common.1 - Y_MARGIN - span));
            let field = (yf0, yf0 + span);
            let (n_inf, n_dis) = split_dashes(n_lanes);
            for y in dash_positions(rng, n_inf, field) {
                dashes.push((xa * rng.gen_range(0.15..0.85), y));
            }
            let mut zone_top = yb0 + vb * dur + lead;
            if rng.gen_bool(0.5) {
                let m = oncoming_over(cfg, field, -xa, rng);
                zone_top = zone_top.max(m.y0);
                entities.push((
                    "amb".to_string(),
                    EntityKind::Vehicle,
                    Some(BehaviorClass::MTU),
                    m,
                ));
            }
            let top = zone_top + 1.6;
            for y in dash_positions(rng, n_dis, (top, top + 5.0)) {
                dashes.push((xa * rng.gen_range(0.15..0.85), y));
            }
        }
    }

    // Optional parked background vehicles well off the actor's corridor.
    let spare = cfg.max_vehicles.saturating_sub(entities.len());
    if spare > 0 && rng.gen_bool(cfg.ambient_parked_prob) {
        let n_ambient = rng.gen_range(1..=2).min(spare);
        for k in 0..n_ambient {
            let x = (1.5 * w + rng.gen_range(0.0..1.5))
                * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            entities.push((
                format!("parked{}", k),
                EntityKind::Vehicle,
                Some(BehaviorClass::PRK),
                Motion::still(x, rng.gen_range(0.0..15.0)),
            ));
        }
    }

    for (i, (x, y)) in dashes.into_iter().enumerate() {
        entities.push((
            format!("lane{}", i),
            EntityKind::LaneMarking,
            None,
            Motion::still(x, y),
        ));
    }

    SceneDraft {
        entities,
        witness_pairs,
    }
}

fn render_scene(
    cfg: &SynthConfig,
    class: BehaviorClass,
    index: usize,
    draft: SceneDraft,
    ego_speed: Scalar,
    rng: &mut impl Rng,
) -> Scene {
    use rand_distr::{Distribution, Normal};
    let noise = Normal::new(0.0, cfg.noise_sigma.max(1e-300)).unwrap();
    let mut tracks = Vec::with_capacity(draft.entities.len());
    for (id, kind, label, motion) in draft.entities {
        let mut points: Vec<Option<Point>> = (0..cfg.t)
            .map(|f| {
                let t = f as Scalar * cfg.dt;
                let (x, y) = motion.at(t);
                // Ego-relative frame: ego at origin moving along +y.
                let mut p = Point::new(x, y - ego_speed * t);
                if cfg.noise_sigma > 0.0 {
                    p.x += noise.sample(rng);
                    p.y += noise.sample(rng);
                }
                if cfg.dropout > 0.0 && rng.gen_bool(cfg.dropout) {
                    None
                } else {
                    Some(p)
                }
            })
            .collect();
        // Guarantee the 2-present-points invariant after dropout.
        if points.iter().flatten().count() < 2 {
            let t_last = (cfg.t - 1) as Scalar * cfg.dt;
            let (x0, y0) = motion.at(0.0);
            let (x1, y1) = motion.at(t_last);
            points[0] = Some(Point::new(x0, y0));
            points[cfg.t - 1] = Some(Point::new(x1, y1 - ego_speed * t_last));
        }
        tracks.push(Track {
            id,
            kind,
            label,
            points,
        });
    }
    Scene {
        id: format!("{}_{:05}", class.name().to_lowercase(), index),
        t: cfg.t,
        tracks,
        metadata: Some(SceneMetadata {
            witness_pairs: draft.witness_pairs,
            noise_sigma: Some(cfg.noise_sigma),
        }),
    }
}

/// Generates the full corpus: `scenes_per_class` scenes for each of the six
/// classes, deterministic in `cfg.seed`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<Scene>, Error> {
    cfg.validate()?;
    let mut scenes = Vec::with_capacity(cfg.scenes_per_class * NUM_CLASSES);
    for class in BehaviorClass::ALL {
        for index in 0..cfg.scenes_per_class {
            let stream_index = (class.index() * cfg.scenes_per_class + index) as u64;
            let mut rng = stream_rng(cfg.seed, "synth", stream_index);
            let ego_speed = sample(&mut rng, cfg.ego_speed);
            let draft = draft_scene(cfg, class, ego_speed, &mut rng);
            scenes.push(render_scene(cfg, class, index, draft, ego_speed, &mut rng));
        }
    }
    Ok(scenes)
}

/// The behavior class a scene is stratified by: the label of its first
/// labeled vehicle (the generator puts the class-defining actor first).
pub fn scene_stratum(scene: &Scene) -> Option<BehaviorClass> {
    scene.vehicles().find_map(|t| t.label)
}

/// Class-stratified seeded split into (train, val, test). Emits a warning
/// string per class with fewer scenes than split parts.
pub fn split_corpus(
    scenes: Vec<Scene>,
    ratios: (Scalar, Scalar, Scalar),
    seed: u64,
) -> Result<(Vec<Scene>, Vec<Scene>, Vec<Scene>, Vec<String>), Error> {
    use rand::seq::SliceRandom;
    let sum = ratios.0 + ratios.1 + ratios.2;
    if ratios.0 <= 0.0 || ratios.1 <= 0.0 || ratios.2 <= 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got {:?}",
            ratios
        )));
    }
    let mut by_class: Vec<Vec<Scene>> = (0..=NUM_CLASSES).map(|_| Vec::new()).collect();
    for scene in scenes {
        let stratum = scene_stratum(&scene).map(|c| c.index()).unwrap_or(NUM_CLASSES);
        by_class[stratum].push(scene);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (stratum, mut group) in by_class.into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        if group.len() < 3 {
            warnings.push(format!(
                "stratum {} has only {} scene(s); best-effort assignment",
                stratum,
                group.len()
            ));
        }
        let mut rng = stream_rng(seed, "split", stratum as u64);
        group.shuffle(&mut rng);
        let n = group.len();
        let n_train = (n as Scalar * ratios.0).floor() as usize;
        let n_val = (n as Scalar * ratios.1).floor() as usize;
        for (i, scene) in group.into_iter().enumerate() {
            if i < n_train {
                train.push(scene);
            } else if i < n_train + n_val {
                val.push(scene);
            } else {
                test.push(scene);
            }
        }
    }
    Ok((train, val, test, warnings))
}

/// Retains labels on ceil(fraction * N) vehicles per class; the rest become
/// unlabeled (excluded from the loss mask but still present in graphs).
pub fn subsample_labels(
    mut scenes: Vec<Scene>,
    fraction: Scalar,
    seed: u64,
) -> Result<Vec<Scene>, Error> {
    use rand::seq::SliceRandom;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "label fraction must lie in (0,1], got {}",
            fraction
        )));
    }
    if fraction == 1.0 {
        return Ok(scenes);
    }
    // (scene idx, track idx) of labeled vehicles, grouped per class.
    let mut by_class: Vec<Vec<(usize, usize)>> = (0..NUM_CLASSES).map(|_| Vec::new()).collect();
    for (si, scene) in scenes.iter().enumerate() {
        for (ti, track) in scene.tracks.iter().enumerate() {
            if let Some(label) = track.label {
                by_class[label.index()].push((si, ti));
            }
        }
    }
    for (cls, mut group) in by_class.into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let keep = ((fraction * group.len() as Scalar).ceil() as usize).max(1);
        let mut rng = stream_rng(seed, "subsample", cls as u64);
        group.shuffle(&mut rng);
        for &(si, ti) in group.iter().skip(keep) {
            scenes[si].tracks[ti].label = None;
        }
    }
    Ok(scenes)
}
