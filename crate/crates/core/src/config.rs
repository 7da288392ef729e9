//! Scenario files: flat `section.key = value` lines with `#` comments.
//!
//! Every key has a per-plant default, so an empty file is a valid scenario
//! (the pendulum, Case 1). Unknown keys, duplicate keys and keys that belong
//! to the other plant are rejected. [`Scenario::to_config_string`] writes
//! every resolved key, and parsing that output yields the same scenario.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::cbf::SafetySpec;
use crate::controller::ControllerParams;
use crate::estimator::EstimatorConfig;
use crate::plants::{Obstacle, Pendulum, PendulumParams, PendulumSafety, Plant, Robot, RobotParams, RobotSafety};
use crate::schedule::BlendFunction;
use crate::sim::{self, format_f64, Case, SimConfig, TrajectoryLog};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    Pendulum,
    Robot,
}

impl PlantKind {
    pub fn name(self) -> &'static str {
        match self {
            PlantKind::Pendulum => "pendulum",
            PlantKind::Robot => "robot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pendulum" => Some(PlantKind::Pendulum),
            "robot" => Some(PlantKind::Robot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub t_end: f64,
    pub ode_dt: f64,
    pub ctrl_hz: f64,
    pub sample_dt: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings {
    pub k_n: usize,
    pub sigma: f64,
    pub theta0: Vec<f64>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub nu0: Option<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    /// Input weight, row-major.
    pub h: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantSettings {
    Pendulum(PendulumParams),
    Robot(RobotParams),
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cases: Vec<Case>,
    pub output_dir: PathBuf,
    pub sim: SimSettings,
    pub estimator: EstimatorSettings,
    pub controller: ControllerSettings,
    /// Class-K gains `c_0, c_1`.
    pub alpha: Vec<f64>,
    pub plant: PlantSettings,
}

fn cfg_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| cfg_err(line, format!("{key}: expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(cfg_err(line, format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(line, key, s)).collect()
}

fn parse_fixed<const N: usize>(line: usize, key: &str, v: &str) -> Result<[f64; N]> {
    let vals = parse_list(line, key, v)?;
    vals.try_into()
        .map_err(|vals: Vec<f64>| cfg_err(line, format!("{key}: expected {N} values, got {}", vals.len())))
}

fn parse_obstacles(line: usize, v: &str) -> Result<Vec<Obstacle>> {
    v.split(';')
        .map(|item| {
            let [x, y, r] = parse_fixed::<3>(line, "robot.obstacles", item)?;
            Ok(Obstacle { center: [x, y], radius: r })
        })
        .collect()
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(", ")
}

impl Scenario {
    /// Defaults for a plant, with the settings of the benchmark studies.
    pub fn defaults(kind: PlantKind) -> Self {
        match kind {
            PlantKind::Pendulum => Self {
                cases: vec![Case::Case1],
                output_dir: PathBuf::from("out"),
                sim: SimSettings {
                    t_end: 60.0,
                    ode_dt: 1e-4,
                    ctrl_hz: 1000.0,
                    sample_dt: 0.25,
                    x0: vec![0.1745, 0.0],
                    seed: 0,
                },
                estimator: EstimatorSettings {
                    k_n: 30,
                    sigma: 0.1,
                    theta0: vec![0.0; 5],
                    box_lo: vec![0.0; 5],
                    box_hi: vec![2.5; 5],
                    nu0: None,
                    eta: 2.0,
                },
                controller: ControllerSettings { h: vec![2.0], beta: 200.0 },
                alpha: vec![200.0, 200.0],
                plant: PlantSettings::Pendulum(PendulumParams::default()),
            },
            PlantKind::Robot => Self {
                cases: vec![Case::Case1],
                output_dir: PathBuf::from("out"),
                sim: SimSettings {
                    t_end: 120.0,
                    ode_dt: 1e-3,
                    ctrl_hz: 200.0,
                    sample_dt: 0.1,
                    x0: vec![-0.5, 0.5, 0.0, 0.0, 0.0],
                    seed: 0,
                },
                estimator: EstimatorSettings {
                    k_n: 10,
                    sigma: 0.001,
                    theta0: vec![0.1; 4],
                    box_lo: vec![0.0; 4],
                    box_hi: vec![5.0, 5.0, 5.0, 1.0],
                    nu0: None,
                    eta: 2.0,
                },
                controller: ControllerSettings {
                    h: vec![2.0, 0.0, 0.0, 2.0],
                    beta: 20.0,
                },
                alpha: vec![5.0, 2.0],
                plant: PlantSettings::Robot(RobotParams::default()),
            },
        }
    }

    pub fn kind(&self) -> PlantKind {
        match self.plant {
            PlantSettings::Pendulum(_) => PlantKind::Pendulum,
            PlantSettings::Robot(_) => PlantKind::Robot,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut order = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected `key = value`, got {content:?}")))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (line, value.trim().to_string())).is_some() {
                return Err(cfg_err(line, format!("duplicate key {key}")));
            }
            order.push(key);
        }

        let kind = match entries.get("plant") {
            Some((line, v)) => {
                PlantKind::parse(v).ok_or_else(|| cfg_err(*line, format!("unknown plant {v:?}")))?
            }
            None => PlantKind::Pendulum,
        };
        let mut s = Self::defaults(kind);
        for key in &order {
            let (line, value) = &entries[key];
            s.apply(*line, key, value)?;
        }
        s.validate()?;
        Ok(s)
    }

    fn apply(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let num = || parse_f64(line, key, v);
        let list = || parse_list(line, key, v);
        match key {
            "plant" => {}
            "cases" => {
                self.cases = v
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<u8>()
                            .ok()
                            .and_then(Case::from_number)
                            .ok_or_else(|| cfg_err(line, format!("cases: expected 1, 2 or 3, got {c:?}")))
                    })
                    .collect::<Result<_>>()?;
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            "sim.t_end" => self.sim.t_end = num()?,
            "sim.ode_dt" => self.sim.ode_dt = num()?,
            "sim.ctrl_hz" => self.sim.ctrl_hz = num()?,
            "sim.sample_dt" => self.sim.sample_dt = num()?,
            "sim.x0" => self.sim.x0 = list()?,
            "sim.seed" => {
                self.sim.seed = v
                    .parse()
                    .map_err(|_| cfg_err(line, format!("sim.seed: expected an integer, got {v:?}")))?
            }
            "estimator.k_n" => {
                self.estimator.k_n = v
                    .parse()
                    .map_err(|_| cfg_err(line, format!("estimator.k_n: expected an integer, got {v:?}")))?
            }
            "estimator.sigma" => self.estimator.sigma = num()?,
            "estimator.theta0" => self.estimator.theta0 = list()?,
            "estimator.box_lo" => self.estimator.box_lo = list()?,
            "estimator.box_hi" => self.estimator.box_hi = list()?,
            "estimator.nu0" => self.estimator.nu0 = if v == "auto" { None } else { Some(num()?) },
            "estimator.eta" => self.estimator.eta = num()?,
            "controller.h" => self.controller.h = list()?,
            "controller.beta" => self.controller.beta = num()?,
            "cbf.alpha" => self.alpha = list()?,
            _ => self.apply_plant(line, key, v)?,
        }
        Ok(())
    }

    fn apply_plant(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let num = || parse_f64(line, key, v);
        let kind = self.kind();
        match &mut self.plant {
            PlantSettings::Pendulum(p) => match key {
                "pendulum.m" => p.m = num()?,
                "pendulum.l" => p.l = num()?,
                "pendulum.grav" => p.grav = num()?,
                "pendulum.eps1" => p.eps1 = num()?,
                "pendulum.eps2" => p.eps2 = num()?,
                "pendulum.theta_star" => p.theta_star = Vector::from_vec(parse_list(line, key, v)?),
                "pendulum.k1" => p.k1 = num()?,
                "pendulum.k2" => p.k2 = num()?,
                _ => return Err(unknown(line, key, kind)),
            },
            PlantSettings::Robot(p) => match key {
                "robot.k_m" => p.k_m = num()?,
                "robot.r" => p.r = num()?,
                "robot.l" => p.l = num()?,
                "robot.l_d" => p.l_d = num()?,
                "robot.r_a" => p.r_a = num()?,
                "robot.mass" => p.mass = num()?,
                "robot.inertia" => p.inertia = num()?,
                "robot.grav" => p.grav = num()?,
                "robot.theta_star" => p.theta_star = Vector::from_vec(parse_list(line, key, v)?),
                "robot.mu1" => p.mu1 = num()?,
                "robot.mu2" => p.mu2 = num()?,
                "robot.k1" => p.k1 = num()?,
                "robot.k2" => p.k2 = num()?,
                "robot.obstacles" => p.obstacles = parse_obstacles(line, v)?,
                "robot.rho" => p.rho = num()?,
                "robot.goal" => p.goal = parse_fixed::<2>(line, key, v)?,
                _ => return Err(unknown(line, key, kind)),
            },
        }
        Ok(())
    }

    /// Checks dimensions and parameter ranges without running anything.
    /// Failures are always configuration errors.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| if e.is_config() { e } else { cfg_err(0, e.to_string()) })
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| cfg_err(0, msg);
        if self.cases.is_empty() {
            return Err(bad("cases must list at least one case".into()));
        }
        let dims = self.plant_model().dims();
        if self.sim.x0.len() != dims.n {
            return Err(bad(format!("sim.x0 needs {} values, got {}", dims.n, self.sim.x0.len())));
        }
        if self.theta_star().len() != dims.p {
            return Err(bad(format!("theta_star needs {} values", dims.p)));
        }
        if self.controller.h.len() != dims.m * dims.m {
            return Err(bad(format!(
                "controller.h needs {} values (row-major {}x{})",
                dims.m * dims.m,
                dims.m,
                dims.m
            )));
        }
        if self.alpha.len() != 2 || self.alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(bad("cbf.alpha needs two positive gains".into()));
        }
        if let PlantSettings::Robot(p) = &self.plant {
            if p.obstacles.is_empty() {
                return Err(Error::EmptyBarrierSet);
            }
            if !(p.rho > 0.0) {
                return Err(Error::InvalidSharpness(p.rho));
            }
        }
        self.estimator_config().validate()?;
        self.controller_params()?;
        BlendFunction::new(self.estimator.eta)?;
        for case in &self.cases {
            self.sim_config(*case).plan()?;
        }
        Ok(())
    }

    fn theta_star(&self) -> &Vector {
        match &self.plant {
            PlantSettings::Pendulum(p) => &p.theta_star,
            PlantSettings::Robot(p) => &p.theta_star,
        }
    }

    pub fn plant_model(&self) -> Box<dyn Plant> {
        match &self.plant {
            PlantSettings::Pendulum(p) => Box::new(Pendulum::new(p.clone())),
            PlantSettings::Robot(p) => Box::new(Robot::new(p.clone())),
        }
    }

    pub fn safety(&self) -> Box<dyn SafetySpec> {
        let (c0, c1) = (self.alpha[0], self.alpha[1]);
        match &self.plant {
            PlantSettings::Pendulum(_) => Box::new(PendulumSafety::new(c0, c1)),
            PlantSettings::Robot(p) => Box::new(RobotSafety::new(p, c0, c1)),
        }
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            k_n: self.estimator.k_n,
            sigma: self.estimator.sigma,
            theta0: Vector::from_vec(self.estimator.theta0.clone()),
            theta_box_lo: Vector::from_vec(self.estimator.box_lo.clone()),
            theta_box_hi: Vector::from_vec(self.estimator.box_hi.clone()),
        }
    }

    pub fn controller_params(&self) -> Result<ControllerParams> {
        let m = (self.controller.h.len() as f64).sqrt().round() as usize;
        let h = Matrix::from_row_slice(m, m, &self.controller.h);
        ControllerParams::constant(h, self.controller.beta)
    }

    pub fn sim_config(&self, case: Case) -> SimConfig {
        SimConfig {
            t_end: self.sim.t_end,
            ode_dt: self.sim.ode_dt,
            ctrl_hz: self.sim.ctrl_hz,
            sample_dt: self.sim.sample_dt,
            case,
            x0: Vector::from_vec(self.sim.x0.clone()),
            eta: self.estimator.eta,
            nu0: self.estimator.nu0,
            seed: self.sim.seed,
        }
    }

    pub fn run_case(&self, case: Case) -> Result<TrajectoryLog> {
        let plant = self.plant_model();
        let safety = self.safety();
        sim::run(
            plant.as_ref(),
            safety.as_ref(),
            &self.controller_params()?,
            &self.estimator_config(),
            &self.sim_config(case),
        )
    }

    /// Every resolved key, one per line, in a fixed order.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        kv("plant", self.kind().name().to_string());
        kv(
            "cases",
            self.cases.iter().map(|c| c.number().to_string()).collect::<Vec<_>>().join(", "),
        );
        kv("output_dir", self.output_dir.display().to_string());
        kv("sim.t_end", format_f64(self.sim.t_end));
        kv("sim.ode_dt", format_f64(self.sim.ode_dt));
        kv("sim.ctrl_hz", format_f64(self.sim.ctrl_hz));
        kv("sim.sample_dt", format_f64(self.sim.sample_dt));
        kv("sim.x0", join(&self.sim.x0));
        kv("sim.seed", self.sim.seed.to_string());
        kv("estimator.k_n", self.estimator.k_n.to_string());
        kv("estimator.sigma", format_f64(self.estimator.sigma));
        kv("estimator.theta0", join(&self.estimator.theta0));
        kv("estimator.box_lo", join(&self.estimator.box_lo));
        kv("estimator.box_hi", join(&self.estimator.box_hi));
        kv(
            "estimator.nu0",
            self.estimator.nu0.map_or_else(|| "auto".to_string(), format_f64),
        );
        kv("estimator.eta", format_f64(self.estimator.eta));
        kv("controller.h", join(&self.controller.h));
        kv("controller.beta", format_f64(self.controller.beta));
        kv("cbf.alpha", join(&self.alpha));
        match &self.plant {
            PlantSettings::Pendulum(p) => {
                kv("pendulum.m", format_f64(p.m));
                kv("pendulum.l", format_f64(p.l));
                kv("pendulum.grav", format_f64(p.grav));
                kv("pendulum.eps1", format_f64(p.eps1));
                kv("pendulum.eps2", format_f64(p.eps2));
                kv("pendulum.theta_star", join(p.theta_star.as_slice()));
                kv("pendulum.k1", format_f64(p.k1));
                kv("pendulum.k2", format_f64(p.k2));
            }
            PlantSettings::Robot(p) => {
                kv("robot.k_m", format_f64(p.k_m));
                kv("robot.r", format_f64(p.r));
                kv("robot.l", format_f64(p.l));
                kv("robot.l_d", format_f64(p.l_d));
                kv("robot.r_a", format_f64(p.r_a));
                kv("robot.mass", format_f64(p.mass));
                kv("robot.inertia", format_f64(p.inertia));
                kv("robot.grav", format_f64(p.grav));
                kv("robot.theta_star", join(p.theta_star.as_slice()));
                kv("robot.mu1", format_f64(p.mu1));
                kv("robot.mu2", format_f64(p.mu2));
                kv("robot.k1", format_f64(p.k1));
                kv("robot.k2", format_f64(p.k2));
                let obstacles = p
                    .obstacles
                    .iter()
                    .map(|o| join(&[o.center[0], o.center[1], o.radius]))
                    .collect::<Vec<_>>()
                    .join("; ");
                kv("robot.obstacles", obstacles);
                kv("robot.rho", format_f64(p.rho));
                kv("robot.goal", join(&p.goal));
            }
        }
        out
    }
}

fn unknown(line: usize, key: &str, kind: PlantKind) -> Error {
    let other = match kind {
        PlantKind::Pendulum => "robot.",
        PlantKind::Robot => "pendulum.",
    };
    if key.starts_with(other) {
        cfg_err(line, format!("key {key} does not apply to plant {}", kind.name()))
    } else {
        cfg_err(line, format!("unknown key {key}"))
    }
}
