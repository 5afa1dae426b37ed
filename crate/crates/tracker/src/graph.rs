//! Skill graph: skills, composite set-ups, correlation edges, exercises.
//!
//! The definition is a TOML document:
//!
//! ```toml
//! [params]
//! n_i = 10          # inference order for composite skills
//! n_c = 5           # default correlation order
//! [params.decay]
//! t_half_secs = 31557600
//!
//! [[skills]]
//! id = "fractions"
//! correlations = [{ skill = "decimals", n_c = 4 }]
//!
//! [[skills]]
//! id = "ratio"
//! setup = "and(fractions, decimals)"
//!
//! [[exercises]]
//! id = "ex-1"
//! setup = "or(fractions, decimals)"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use pdt_core::fusion::{DEFAULT_CORRELATION_ORDER, MAX_CORRELATION_ORDER};
use pdt_core::{parse, DecayParams, Polynomial, SetupExpr, SkillId, MAX_ORDER};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrackerError};
use crate::model::ExerciseId;

/// Highest power of a single skill a set-up may produce.
pub const MAX_VAR_DEGREE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    pub decay: DecayParams,
    /// Inference order for composite skills without their own override.
    pub n_i: usize,
    /// Correlation order for edges that do not name one.
    pub n_c: usize,
    /// Largest correlation order accepted; never above the hard cap of 10.
    pub n_c_cap: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            decay: DecayParams::default(),
            n_i: 10,
            n_c: DEFAULT_CORRELATION_ORDER,
            n_c_cap: MAX_CORRELATION_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationDef {
    pub skill: SkillId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_c: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillDef {
    pub id: SkillId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlations: Vec<CorrelationDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExerciseDef {
    pub id: ExerciseId,
    pub setup: String,
}

/// Graph definition as written, before validation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphDef {
    pub params: GraphParams,
    pub skills: Vec<SkillDef>,
    pub exercises: Vec<ExerciseDef>,
}

impl GraphDef {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TrackerError::GraphSyntax(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("graph definitions serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    DuplicateId,
    ParseError,
    UnknownSkill,
    Cycle,
    NondeterministicExercise,
    DegreeBound,
    CorrelationCap,
    SelfCorrelation,
    AsymmetricCorrelation,
    LargeCorrelationGroup,
    InferenceOverflow,
    OrderBudget,
    InvalidParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub severity: Severity,
    /// `skills.<id>`, `exercises.<id>` or `params`.
    pub at: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        let code = serde_json::to_value(self.code).expect("enum serializes");
        write!(f, "{sev}[{}] {}: {}", code.as_str().unwrap_or_default(), self.at, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

/// Validated composite set-up.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub setup: SetupExpr,
    pub poly: Polynomial,
    pub n_i: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skill {
    pub id: SkillId,
    pub name: String,
    pub composite: Option<Composite>,
    /// Correlated skills with their correlation orders, sorted by id.
    pub correlations: Vec<(SkillId, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exercise {
    pub id: ExerciseId,
    pub setup: SetupExpr,
    pub poly: Polynomial,
}

impl Exercise {
    /// Skills whose stored state an outcome of this exercise updates.
    pub fn skills(&self) -> &[SkillId] {
        self.poly.vars()
    }
}

/// A graph that passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillGraph {
    pub params: GraphParams,
    skills: BTreeMap<SkillId, Skill>,
    exercises: BTreeMap<ExerciseId, Exercise>,
    def: GraphDef,
}

impl SkillGraph {
    /// Validates and builds; warnings are returned alongside the graph.
    pub fn new(def: GraphDef) -> Result<(Self, ValidationReport)> {
        let report = validate(&def);
        if !report.valid {
            return Err(TrackerError::InvalidGraph(report));
        }
        let p = &def.params;
        let skills = def
            .skills
            .iter()
            .map(|s| {
                let composite = s.setup.as_deref().map(|text| {
                    let setup = parse(text).expect("validated");
                    let poly = setup.compile();
                    Composite { setup, poly, n_i: s.inference_order.unwrap_or(p.n_i) }
                });
                let mut correlations: Vec<(SkillId, usize)> =
                    s.correlations.iter().map(|c| (c.skill.clone(), c.n_c.unwrap_or(p.n_c))).collect();
                correlations.sort();
                let skill = Skill {
                    id: s.id.clone(),
                    name: s.name.clone().unwrap_or_else(|| s.id.to_string()),
                    composite,
                    correlations,
                };
                (s.id.clone(), skill)
            })
            .collect();
        let exercises = def
            .exercises
            .iter()
            .map(|e| {
                let setup = parse(&e.setup).expect("validated");
                let poly = setup.compile();
                (e.id.clone(), Exercise { id: e.id.clone(), setup, poly })
            })
            .collect();
        let graph = Self { params: def.params.clone(), skills, exercises, def };
        Ok((graph, report))
    }

    pub fn from_toml(text: &str) -> Result<(Self, ValidationReport)> {
        Self::new(GraphDef::from_toml(text)?)
    }

    pub fn definition(&self) -> &GraphDef {
        &self.def
    }

    pub fn skill(&self, id: &SkillId) -> Result<&Skill> {
        self.skills.get(id).ok_or_else(|| TrackerError::UnknownSkill(id.clone()))
    }

    pub fn skills(&self) -> impl Iterator<Item = &Skill> {
        self.skills.values()
    }

    pub fn exercise(&self, id: &ExerciseId) -> Result<&Exercise> {
        self.exercises.get(id).ok_or_else(|| TrackerError::UnknownExercise(id.clone()))
    }

    pub fn exercises(&self) -> impl Iterator<Item = &Exercise> {
        self.exercises.values()
    }
}

/// Every check on a definition; never fails, problems go in the report.
pub fn validate(def: &GraphDef) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |code, severity, at: String, message: String| issues.push(Issue { code, severity, at, message });
    let p = &def.params;

    if let Err(e) = p.decay.validate() {
        push(IssueCode::InvalidParams, Severity::Error, "params".into(), e.to_string());
    }
    if p.n_i == 0 {
        push(IssueCode::InvalidParams, Severity::Error, "params".into(), "n_i must be positive".into());
    }
    if p.n_c_cap > MAX_CORRELATION_ORDER {
        push(
            IssueCode::CorrelationCap,
            Severity::Error,
            "params".into(),
            format!("n_c_cap {} exceeds {MAX_CORRELATION_ORDER}", p.n_c_cap),
        );
    }
    let cap = p.n_c_cap.min(MAX_CORRELATION_ORDER);
    if p.n_c == 0 || p.n_c > cap {
        push(IssueCode::CorrelationCap, Severity::Error, "params".into(), format!("n_c {} outside 1..={cap}", p.n_c));
    }
    if p.decay.n_s_max + MAX_VAR_DEGREE > MAX_ORDER {
        push(
            IssueCode::OrderBudget,
            Severity::Error,
            "params".into(),
            format!("n_s_max {} leaves no room for updates below order {MAX_ORDER}", p.decay.n_s_max),
        );
    }

    let mut ids = BTreeSet::new();
    for s in &def.skills {
        if !ids.insert(s.id.clone()) {
            push(IssueCode::DuplicateId, Severity::Error, format!("skills.{}", s.id), "skill defined twice".into());
        }
    }
    let mut ex_ids = BTreeSet::new();
    for e in &def.exercises {
        if !ex_ids.insert(e.id.clone()) {
            push(IssueCode::DuplicateId, Severity::Error, format!("exercises.{}", e.id), "exercise defined twice".into());
        }
    }

    // composite set-ups
    let mut subskills: BTreeMap<SkillId, BTreeSet<SkillId>> = BTreeMap::new();
    for s in &def.skills {
        let at = format!("skills.{}", s.id);
        let Some(text) = &s.setup else { continue };
        let setup = match parse(text) {
            Ok(e) => e,
            Err(e) => {
                push(IssueCode::ParseError, Severity::Error, at, e.to_string());
                continue;
            }
        };
        let refs = setup.skills();
        for r in refs.iter().filter(|r| !ids.contains(*r)) {
            push(IssueCode::UnknownSkill, Severity::Error, at.clone(), format!("set-up references unknown skill {r}"));
        }
        let poly: Polynomial = setup.compile();
        let degree = poly.max_var_degree();
        if degree > MAX_VAR_DEGREE {
            push(
                IssueCode::DegreeBound,
                Severity::Error,
                at.clone(),
                format!("a skill appears with power {degree}; at most {MAX_VAR_DEGREE} allowed"),
            );
        }
        let n_i = s.inference_order.unwrap_or(p.n_i);
        if n_i == 0 {
            push(IssueCode::InvalidParams, Severity::Error, at.clone(), "inference_order must be positive".into());
        }
        if degree * n_i > MAX_ORDER {
            push(
                IssueCode::InferenceOverflow,
                Severity::Error,
                at.clone(),
                format!("inference needs order {} above {MAX_ORDER}", degree * n_i),
            );
        }
        subskills.insert(s.id.clone(), refs);
    }
    for cycle in find_cycles(&subskills) {
        let path: Vec<&str> = cycle.iter().map(SkillId::as_str).collect();
        push(
            IssueCode::Cycle,
            Severity::Error,
            format!("skills.{}", cycle[0]),
            format!("set-ups form a cycle: {}", path.join(" -> ")),
        );
    }

    // correlations
    let edges: BTreeMap<(&SkillId, &SkillId), usize> = def
        .skills
        .iter()
        .flat_map(|s| s.correlations.iter().map(move |c| ((&s.id, &c.skill), c.n_c.unwrap_or(p.n_c))))
        .collect();
    for s in &def.skills {
        let at = format!("skills.{}", s.id);
        let mut by_order: BTreeMap<usize, usize> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for c in &s.correlations {
            let n_c = c.n_c.unwrap_or(p.n_c);
            if !seen.insert(&c.skill) {
                push(IssueCode::DuplicateId, Severity::Error, at.clone(), format!("correlation with {} listed twice", c.skill));
            }
            if c.skill == s.id {
                push(IssueCode::SelfCorrelation, Severity::Error, at.clone(), "skill correlated with itself".into());
                continue;
            }
            if !ids.contains(&c.skill) {
                push(IssueCode::UnknownSkill, Severity::Error, at.clone(), format!("correlation with unknown skill {}", c.skill));
                continue;
            }
            if n_c == 0 || n_c > cap {
                push(IssueCode::CorrelationCap, Severity::Error, at.clone(), format!("n_c {n_c} with {} outside 1..={cap}", c.skill));
            }
            match edges.get(&(&c.skill, &s.id)) {
                None => push(
                    IssueCode::AsymmetricCorrelation,
                    Severity::Error,
                    at.clone(),
                    format!("{} does not list {} back", c.skill, s.id),
                ),
                Some(&back) if back != n_c => push(
                    IssueCode::AsymmetricCorrelation,
                    Severity::Error,
                    at.clone(),
                    format!("n_c {n_c} towards {} but {back} back", c.skill),
                ),
                _ => {}
            }
            *by_order.entry(n_c).or_default() += 1;
        }
        for (n_c, count) in &by_order {
            if *count >= 2 {
                push(
                    IssueCode::LargeCorrelationGroup,
                    Severity::Warning,
                    at.clone(),
                    format!("{} skills share a joint prior of order {n_c} with this one", count),
                );
            }
        }
        let n_i = if s.setup.is_some() { s.inference_order.unwrap_or(p.n_i) } else { 0 };
        let budget = p.decay.n_s_max + n_i + by_order.keys().sum::<usize>();
        if budget > MAX_ORDER {
            push(
                IssueCode::OrderBudget,
                Severity::Error,
                at.clone(),
                format!("merged posterior may reach order {budget}, above {MAX_ORDER}"),
            );
        }
    }

    // exercises
    for e in &def.exercises {
        let at = format!("exercises.{}", e.id);
        let setup = match parse(&e.setup) {
            Ok(x) => x,
            Err(err) => {
                push(IssueCode::ParseError, Severity::Error, at, err.to_string());
                continue;
            }
        };
        if !setup.is_deterministic() {
            push(
                IssueCode::NondeterministicExercise,
                Severity::Error,
                at.clone(),
                "exercise set-ups may only use and/or".into(),
            );
        }
        for r in setup.skills().iter().filter(|r| !ids.contains(*r)) {
            push(IssueCode::UnknownSkill, Severity::Error, at.clone(), format!("set-up references unknown skill {r}"));
        }
        let degree = setup.compile::<f64>().max_var_degree();
        if degree > MAX_VAR_DEGREE {
            push(
                IssueCode::DegreeBound,
                Severity::Error,
                at.clone(),
                format!("a skill appears with power {degree}; at most {MAX_VAR_DEGREE} allowed"),
            );
        } else if degree * p.n_i > MAX_ORDER {
            push(
                IssueCode::InferenceOverflow,
                Severity::Error,
                at,
                format!("inference needs order {} above {MAX_ORDER}", degree * p.n_i),
            );
        }
    }

    let valid = !issues.iter().any(|i| i.severity == Severity::Error);
    ValidationReport { valid, issues }
}

/// Elementary cycles found by depth-first search, each reported once from
/// its smallest member.
fn find_cycles(edges: &BTreeMap<SkillId, BTreeSet<SkillId>>) -> Vec<Vec<SkillId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        node: &'a SkillId,
        edges: &'a BTreeMap<SkillId, BTreeSet<SkillId>>,
        marks: &mut BTreeMap<&'a SkillId, Mark>,
        stack: &mut Vec<&'a SkillId>,
        out: &mut BTreeSet<Vec<SkillId>>,
    ) {
        marks.insert(node, Mark::Open);
        stack.push(node);
        for next in edges.get(node).into_iter().flatten() {
            match marks.get(next) {
                Some(Mark::Open) => {
                    let start = stack.iter().position(|s| *s == next).expect("open node is on the stack");
                    let mut cycle: Vec<SkillId> = stack[start..].iter().map(|s| (*s).clone()).collect();
                    let min = cycle.iter().enumerate().min_by_key(|(_, s)| *s).map(|(i, _)| i).unwrap_or(0);
                    cycle.rotate_left(min);
                    cycle.push(cycle[0].clone());
                    out.insert(cycle);
                }
                Some(Mark::Done) => {}
                None => visit(next, edges, marks, stack, out),
            }
        }
        stack.pop();
        marks.insert(node, Mark::Done);
    }
    let mut marks = BTreeMap::new();
    let mut out = BTreeSet::new();
    for node in edges.keys() {
        if !marks.contains_key(node) {
            visit(node, edges, &mut marks, &mut Vec::new(), &mut out);
        }
    }
    out.into_iter().collect()
}
