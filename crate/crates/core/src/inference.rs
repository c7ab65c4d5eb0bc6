//! Implication lattice between the stability notions, forward chaining over
//! it, and consistency checks against sampled certificates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::classical::ClassicalKind;
use crate::comparison::{verify_class, FunctionClass, ScalarFunction};
use crate::error::{Error, Result};
use crate::evidence::{Evidence, Witness};
use crate::integral::IntegralKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropertyId {
    #[serde(rename = "UGAS")]
    Ugas,
    #[serde(rename = "UGATT")]
    Ugatt,
    #[serde(rename = "UGWA")]
    Ugwa,
    #[serde(rename = "ULS")]
    Uls,
    #[serde(rename = "UAS")]
    Uas,
    #[serde(rename = "REP")]
    Rep,
    #[serde(rename = "RFC")]
    Rfc,
    #[serde(rename = "UltULS")]
    UltUls,
    #[serde(rename = "iUGAS")]
    IUgas,
    #[serde(rename = "iUGS")]
    IUgs,
    #[serde(rename = "iUGATT")]
    IUgatt,
    #[serde(rename = "iULS")]
    IUls,
    #[serde(rename = "iREP")]
    IRep,
    #[serde(rename = "iRFC")]
    IRfc,
    #[serde(rename = "UltiULS")]
    UltiUls,
    #[serde(rename = "NCLF")]
    Nclf,
    #[serde(rename = "CLF")]
    Clf,
}

use PropertyId::*;

impl PropertyId {
    pub const ALL: [PropertyId; 17] = [
        Ugas, Ugatt, Ugwa, Uls, Uas, Rep, Rfc, UltUls, IUgas, IUgs, IUgatt, IUls, IRep, IRfc, UltiUls, Nclf, Clf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ugas => "UGAS",
            Ugatt => "UGATT",
            Ugwa => "UGWA",
            Uls => "ULS",
            Uas => "UAS",
            Rep => "REP",
            Rfc => "RFC",
            UltUls => "UltULS",
            IUgas => "iUGAS",
            IUgs => "iUGS",
            IUgatt => "iUGATT",
            IUls => "iULS",
            IRep => "iREP",
            IRfc => "iRFC",
            UltiUls => "UltiULS",
            Nclf => "NCLF",
            Clf => "CLF",
        }
    }

    fn bit(self) -> u32 {
        1 << (self as u32)
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PropertyId {
    type Err = Error;

    /// Case-insensitive; the 17 names stay distinct when case is ignored.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        PropertyId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = PropertyId::ALL.iter().map(|p| p.name()).collect();
                Error::InvalidArgument(format!("unknown property `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl From<ClassicalKind> for PropertyId {
    fn from(k: ClassicalKind) -> Self {
        match k {
            ClassicalKind::Uls => Uls,
            ClassicalKind::Uas => Uas,
            ClassicalKind::Ugas => Ugas,
            ClassicalKind::Ugwa => Ugwa,
            ClassicalKind::Ugatt => Ugatt,
            ClassicalKind::Rep => Rep,
            ClassicalKind::Rfc => Rfc,
            ClassicalKind::UltUls => UltUls,
        }
    }
}

impl From<IntegralKind> for PropertyId {
    fn from(k: IntegralKind) -> Self {
        match k {
            IntegralKind::IRep => IRep,
            IntegralKind::IRfc => IRfc,
            IntegralKind::IUls => IUls,
            IntegralKind::IUgs => IUgs,
            IntegralKind::IUgatt => IUgatt,
            IntegralKind::IUgas => IUgas,
            IntegralKind::UltiUls => UltiUls,
        }
    }
}

/// One directed implication `premises ⇒ conclusions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rule {
    /// Group label; an equivalence expands into several rules with the same id.
    pub id: &'static str,
    pub premises: BTreeSet<PropertyId>,
    pub conclusions: BTreeSet<PropertyId>,
    /// Key into the rule documentation (docs/rules.md).
    pub citation: &'static str,
    /// Side conditions on the weight functions, not enforced by the closure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotation: Option<&'static str>,
}

struct Group {
    id: &'static str,
    citation: &'static str,
    annotation: Option<&'static str>,
    shape: Shape,
}

enum Shape {
    Implies(&'static [PropertyId], &'static [PropertyId]),
    /// Each consecutive pair is an implication; `a ⇒ b ⇒ c`.
    Chain(&'static [PropertyId]),
    /// All members are pairwise equivalent.
    Equiv(&'static [&'static [PropertyId]]),
}

const SAME_ALPHA: &str = "the weight α has to be the same on both sides";

const GROUPS: &[Group] = &[
    Group {
        id: "R1",
        citation: "integral-stability-gives-weak-attractivity",
        annotation: Some("stated for α of class K; bounded α weakens the integral notion"),
        shape: Shape::Implies(&[IUgs], &[Ugwa]),
    },
    Group {
        id: "R2",
        citation: "integral-attractivity-split",
        annotation: Some(SAME_ALPHA),
        shape: Shape::Equiv(&[&[Ugwa, UltiUls], &[IUgatt]]),
    },
    Group {
        id: "R3",
        citation: "attractivity-split",
        annotation: None,
        shape: Shape::Equiv(&[&[Ugwa, UltUls], &[Ugatt]]),
    },
    Group {
        id: "R4",
        citation: "integral-local-stability-split",
        annotation: Some(SAME_ALPHA),
        shape: Shape::Equiv(&[&[IRep, UltiUls], &[IUls]]),
    },
    Group {
        id: "R5",
        citation: "integral-ugas-characterization",
        annotation: Some("α transfer between the characterizations is recorded, not enforced"),
        shape: Shape::Equiv(&[
            &[IUgas],
            &[IUgs],
            &[IUls, Ugwa],
            &[IRep, IUgatt],
            &[IUls, IUgatt],
            &[IUgs, IUgatt],
        ]),
    },
    Group {
        id: "R6",
        citation: "rep-gives-irep",
        annotation: Some("holds for every α of class K"),
        shape: Shape::Implies(&[Rep], &[IRep]),
    },
    Group {
        id: "R7",
        citation: "rep-upgrades-local-stability",
        annotation: None,
        shape: Shape::Implies(&[Rep, IUls], &[Uls]),
    },
    Group {
        id: "R8",
        citation: "rep-upgrades-attractivity",
        annotation: None,
        shape: Shape::Implies(&[Rep, IUgatt], &[Ugatt, Uas]),
    },
    Group {
        id: "R9",
        citation: "ugas-characterization",
        annotation: None,
        shape: Shape::Equiv(&[
            &[Ugas],
            &[Rfc, Rep, IUgas],
            &[Rfc, Rep, IUgatt],
            &[Rfc, Rep, Ugwa, UltiUls],
            &[Rfc, Rep, Ugwa, UltUls],
        ]),
    },
    Group {
        id: "R10",
        citation: "ugas-from-rfc-rep-ugatt",
        annotation: None,
        shape: Shape::Equiv(&[&[Ugas], &[Rfc, Rep, Ugatt]]),
    },
    Group {
        id: "R11",
        citation: "nclf-direct-integral",
        annotation: Some("iUGS holds with the decay rate of the Lyapunov function as α and its upper bound as ψ"),
        shape: Shape::Implies(&[Nclf], &[IUgs, IUgatt, IUgas]),
    },
    Group {
        id: "R12",
        citation: "nclf-direct-attractivity",
        annotation: None,
        shape: Shape::Implies(&[Nclf, Rep], &[Ugatt, Uas]),
    },
    Group {
        id: "R13",
        citation: "nclf-direct-ugas",
        annotation: None,
        shape: Shape::Implies(&[Nclf, Rep, Rfc], &[Ugas]),
    },
    Group {
        id: "R14",
        citation: "nclf-converse",
        annotation: Some("construction V(x) = sup over d of the ρ-weighted trajectory integral"),
        shape: Shape::Implies(&[IUgs], &[Nclf]),
    },
    Group {
        id: "R15",
        citation: "classical-chain",
        annotation: None,
        shape: Shape::Chain(&[Ugas, Ugatt, Ugwa]),
    },
    Group {
        id: "R16",
        citation: "clf-gives-ugas",
        annotation: None,
        shape: Shape::Implies(&[Clf], &[Ugas]),
    },
    Group {
        id: "R17",
        citation: "ugas-gives-iugas",
        annotation: Some("α is the inverse of the outer factor of a Sontag factorization of β"),
        shape: Shape::Implies(&[Ugas], &[IUgas]),
    },
    Group {
        id: "R18",
        citation: "rfc-gives-irfc",
        annotation: Some("holds for every α of class K"),
        shape: Shape::Implies(&[Rfc], &[IRfc]),
    },
];

fn set(ps: &[PropertyId]) -> BTreeSet<PropertyId> {
    ps.iter().copied().collect()
}

fn expand() -> Vec<Rule> {
    let mut out = Vec::new();
    for g in GROUPS {
        let mut push = |p: &[PropertyId], c: BTreeSet<PropertyId>| {
            let premises = set(p);
            let conclusions: BTreeSet<_> = c.difference(&premises).copied().collect();
            if conclusions.is_empty() {
                return;
            }
            out.push(Rule {
                id: g.id,
                premises,
                conclusions,
                citation: g.citation,
                annotation: g.annotation,
            });
        };
        match g.shape {
            Shape::Implies(p, c) => push(p, set(c)),
            Shape::Chain(ps) => {
                for w in ps.windows(2) {
                    push(&w[..1], set(&w[1..]));
                }
            }
            Shape::Equiv(members) => {
                for (i, a) in members.iter().enumerate() {
                    for (j, b) in members.iter().enumerate() {
                        if i != j {
                            push(a, set(b));
                        }
                    }
                }
            }
        }
    }
    out
}

/// The implication table with every equivalence expanded into directed rules.
pub fn rule_table() -> &'static [Rule] {
    static TABLE: OnceLock<Vec<Rule>> = OnceLock::new();
    TABLE.get_or_init(expand)
}

/// Why a property is in the starting set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Assumed,
    /// A Supported certificate from the named check.
    Evidence { check: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum Step {
    Leaf { provenance: Provenance },
    Rule {
        rule: String,
        citation: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        annotation: Option<String>,
        premises: Vec<Derivation>,
    },
}

/// Proof tree for one property, down to assumptions and evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub property: PropertyId,
    pub step: Step,
}

impl Derivation {
    /// Rule ids used anywhere in the tree, in preorder.
    pub fn rules_used(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |d| {
            if let Step::Rule { rule, .. } = &d.step {
                out.push(rule.clone());
            }
        });
        out
    }

    pub fn leaves(&self) -> Vec<(PropertyId, Provenance)> {
        let mut out = Vec::new();
        self.walk(&mut |d| {
            if let Step::Leaf { provenance } = &d.step {
                out.push((d.property, provenance.clone()));
            }
        });
        out
    }

    pub fn depth(&self) -> usize {
        match &self.step {
            Step::Leaf { .. } => 0,
            Step::Rule { premises, .. } => 1 + premises.iter().map(Derivation::depth).max().unwrap_or(0),
        }
    }

    fn walk(&self, f: &mut dyn FnMut(&Derivation)) {
        f(self);
        if let Step::Rule { premises, .. } = &self.step {
            for p in premises {
                p.walk(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Closure {
    pub properties: BTreeSet<PropertyId>,
    pub derivations: BTreeMap<PropertyId, Derivation>,
}

impl Closure {
    pub fn contains(&self, p: PropertyId) -> bool {
        self.properties.contains(&p)
    }
}

enum Origin {
    Leaf(Provenance),
    Rule(usize),
}

/// Least fixed point of the rule table over the assumptions. Rules fire in
/// table order, repeatedly, until nothing changes; the first rule that
/// derives a property supplies its derivation.
pub fn infer_closure(assumptions: &[(PropertyId, Provenance)]) -> Closure {
    let table = rule_table();
    let mut known: BTreeMap<PropertyId, Origin> = BTreeMap::new();
    for (p, prov) in assumptions {
        known.entry(*p).or_insert_with(|| Origin::Leaf(prov.clone()));
    }
    loop {
        let mut changed = false;
        for (i, rule) in table.iter().enumerate() {
            if rule.premises.iter().all(|p| known.contains_key(p)) {
                for c in &rule.conclusions {
                    if !known.contains_key(c) {
                        known.insert(*c, Origin::Rule(i));
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    // Premises were known before their conclusion was inserted, so the
    // recursion terminates and trees are acyclic.
    fn build(p: PropertyId, known: &BTreeMap<PropertyId, Origin>, table: &[Rule]) -> Derivation {
        let step = match &known[&p] {
            Origin::Leaf(prov) => Step::Leaf {
                provenance: prov.clone(),
            },
            Origin::Rule(i) => {
                let r = &table[*i];
                Step::Rule {
                    rule: r.id.to_string(),
                    citation: r.citation.to_string(),
                    annotation: r.annotation.map(str::to_string),
                    premises: r.premises.iter().map(|q| build(*q, known, table)).collect(),
                }
            }
        };
        Derivation { property: p, step }
    }
    let derivations: BTreeMap<_, _> = known.keys().map(|p| (*p, build(*p, &known, table))).collect();
    Closure {
        properties: known.keys().copied().collect(),
        derivations,
    }
}

/// Assumed property names, e.g. from a comma separated CLI list.
pub fn assume(names: &[PropertyId]) -> Vec<(PropertyId, Provenance)> {
    names.iter().map(|p| (*p, Provenance::Assumed)).collect()
}

/// A derived (or assumed) property whose certificate is Refuted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contradiction {
    pub property: PropertyId,
    pub derivation: Derivation,
    /// Witness of the refuting certificate.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    pub refuting_check: String,
    /// Witnesses (or margins) of the Supported certificates the derivation rests on.
    pub supporting: BTreeMap<PropertyId, Evidence>,
    pub guidance: Vec<String>,
}

fn weight_note(p: PropertyId, ev: &Evidence) -> Option<String> {
    let alpha: ScalarFunction = serde_json::from_value(ev.parameters.get("alpha")?.clone()).ok()?;
    let grid: Vec<f64> = (0..=24).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect();
    let is_k = verify_class(&alpha.clone().with_class(FunctionClass::K), &grid, 1e-12)
        .map(|e| e.is_supported())
        .unwrap_or(false);
    let is_kinf = verify_class(&alpha.clone().with_class(FunctionClass::Kinf), &grid, 1e-12)
        .map(|e| e.is_supported())
        .unwrap_or(false);
    if is_kinf {
        return None;
    }
    let what = if is_k {
        "bounded (class K but not K∞)"
    } else {
        "not of class K (positive definite only)"
    };
    Some(format!(
        "{p} was certified with α = {alpha}, which is {what}; implications out of {p} are stated for α of class K and bounded weights weaken the integral notion"
    ))
}

/// Reports every property in `closure(assumptions ∪ Supported certificates)`
/// whose own certificate is Refuted.
pub fn consistency_check(
    certificates: &BTreeMap<PropertyId, Evidence>,
    assumptions: &[(PropertyId, Provenance)],
) -> Vec<Contradiction> {
    let mut start = assumptions.to_vec();
    for (p, ev) in certificates {
        if ev.is_supported() {
            start.push((
                *p,
                Provenance::Evidence {
                    check: ev.check.clone(),
                },
            ));
        }
    }
    let closure = infer_closure(&start);
    let mut out = Vec::new();
    for (p, ev) in certificates {
        if !ev.is_refuted() || !closure.contains(*p) {
            continue;
        }
        let derivation = closure.derivations[p].clone();
        let mut supporting = BTreeMap::new();
        let mut assumed = Vec::new();
        for (q, prov) in derivation.leaves() {
            match prov {
                Provenance::Evidence { .. } => {
                    supporting.insert(q, certificates[&q].clone());
                }
                Provenance::Assumed => assumed.push(q.name()),
            }
        }
        let mut guidance = Vec::new();
        if !supporting.is_empty() {
            let names: Vec<_> = supporting.keys().map(|q| q.name()).collect();
            guidance.push(format!(
                "{p} is Refuted by a concrete witness, while {} rest(s) on sampled Supported evidence; the sampled premises are the weaker link (finite ensemble and horizon)",
                names.join(", ")
            ));
        }
        if !assumed.is_empty() {
            guidance.push(format!("assumed without evidence: {}", assumed.join(", ")));
        }
        for (q, sev) in &supporting {
            guidance.extend(weight_note(*q, sev));
        }
        let rules = derivation.rules_used();
        if !rules.is_empty() {
            guidance.push(format!("rules used: {}", rules.join(", ")));
        }
        out.push(Contradiction {
            property: *p,
            derivation,
            witness: ev.witness.clone(),
            refuting_check: ev.check.clone(),
            supporting,
            guidance,
        });
    }
    out
}

/// DOT rendering of the table: one node per property, one edge per
/// premise/conclusion pair of every rule (dashed when the premise is part of
/// a conjunction).
pub fn to_dot() -> String {
    let mut s = String::from("digraph implications {\n  rankdir=TB;\n  node [shape=box, fontname=\"Helvetica\"];\n");
    for p in PropertyId::ALL {
        s.push_str(&format!("  \"{p}\";\n"));
    }
    let mut seen = BTreeSet::new();
    for r in rule_table() {
        let conj = r.premises.len() > 1;
        for a in &r.premises {
            for b in &r.conclusions {
                if seen.insert((*a, *b, r.id)) {
                    let style = if conj { ", style=dashed" } else { "" };
                    s.push_str(&format!("  \"{a}\" -> \"{b}\" [label=\"{}\"{style}];\n", r.id));
                }
            }
        }
    }
    s.push_str("}\n");
    s
}

/// Bitmask form of a property set (bit i = `PropertyId::ALL[i]`).
pub fn mask(props: impl IntoIterator<Item = PropertyId>) -> u32 {
    props.into_iter().fold(0, |m, p| m | p.bit())
}
