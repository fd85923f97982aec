//! JSON document formats and flag parsers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use selfinduced::bratteli::{self, OrderedBratteliDiagram, PathPrefix};
use selfinduced::gensub::{AlphabetSpace, CellSpec, GeneralizedSubstitution};
use selfinduced::odometer::{CharacteristicSequence, Valuation};
use selfinduced::substitution::Substitution;
use selfinduced::words::Alphabet;

use crate::context::{usage, CliResult};

/// Image given as a symbol string or a list of symbols.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Image {
    Text(String),
    Symbols(Vec<String>),
}

/// {alphabet: [...], rules: {symbol: image}}
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubstitutionDoc {
    pub alphabet: Vec<String>,
    pub rules: BTreeMap<String, Image>,
}

impl SubstitutionDoc {
    pub fn build(&self) -> CliResult<Substitution> {
        let alphabet = Alphabet::new(self.alphabet.iter().cloned()).map_err(usage)?;
        let mut rules = Vec::with_capacity(alphabet.len());
        for sym in alphabet.symbols() {
            let img = self.rules.get(sym).ok_or_else(|| usage(format!("no rule for letter {sym}")))?;
            let word = match img {
                Image::Text(t) => alphabet.parse_word(t).map_err(usage)?,
                Image::Symbols(v) => v.iter().map(|s| alphabet.index(s)).collect::<Result<_, _>>().map_err(usage)?,
            };
            rules.push(word);
        }
        if self.rules.len() != alphabet.len() {
            return Err(usage("rules mention letters outside the alphabet"));
        }
        Substitution::new(alphabet, rules).map_err(usage)
    }
}

pub fn builtin_substitution(name: &str) -> CliResult<Substitution> {
    Ok(match name {
        "period-doubling" | "pd" => Substitution::period_doubling(),
        "fibonacci" | "fib" => Substitution::fibonacci(),
        "thue-morse" | "tm" => Substitution::thue_morse(),
        "chacon" => Substitution::chacon(),
        other => return Err(usage(format!("unknown substitution {other}"))),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValuationDoc {
    Finite(u32),
    Named(String),
}

impl ValuationDoc {
    fn build(&self) -> CliResult<Valuation> {
        match self {
            ValuationDoc::Finite(k) => Ok(Valuation::Finite(*k)),
            ValuationDoc::Named(s) if s == "inf" || s == "∞" || s == "infinite" => Ok(Valuation::Infinite),
            ValuationDoc::Named(s) => Err(usage(format!("bad valuation {s}"))),
        }
    }
}

/// {form: "eventually_periodic", prefix, cycle} or {form: "valuations", valuations, infinite_support}
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum OdometerDoc {
    EventuallyPeriodic {
        #[serde(default)]
        prefix: Vec<u64>,
        cycle: Vec<u64>,
    },
    Valuations {
        valuations: BTreeMap<String, ValuationDoc>,
        /// Every unlisted prime divides infinitely many terms exactly once.
        #[serde(default)]
        infinite_support: bool,
    },
}

impl OdometerDoc {
    pub fn build(&self) -> CliResult<CharacteristicSequence> {
        match self {
            OdometerDoc::EventuallyPeriodic { prefix, cycle } => {
                CharacteristicSequence::eventually_periodic(prefix.clone(), cycle.clone()).map_err(usage)
            }
            OdometerDoc::Valuations { valuations, infinite_support } => {
                let mut map = BTreeMap::new();
                for (p, v) in valuations {
                    let p: u64 = p.parse().map_err(|_| usage(format!("bad prime {p}")))?;
                    if selfinduced::odometer::factorize(p) != vec![p] {
                        return Err(usage(format!("{p} is not prime")));
                    }
                    map.insert(p, v.build()?);
                }
                let others = if *infinite_support { Valuation::Finite(1) } else { Valuation::Finite(0) };
                CharacteristicSequence::profile(map, others).map_err(usage)
            }
        }
    }
}

pub fn parse_list<T: std::str::FromStr>(text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| usage(format!("bad list entry {t}"))))
        .collect()
}

/// Semicolon-separated list of comma-separated paths.
pub fn parse_paths(text: &str) -> CliResult<Vec<PathPrefix>> {
    text.split(';').map(|p| parse_list(p).map(PathPrefix::new)).collect()
}

pub fn builtin_diagram(name: &str) -> CliResult<OrderedBratteliDiagram> {
    if let Some(b) = name.strip_prefix("base") {
        let b: u64 = b.parse().map_err(|_| usage(format!("unknown diagram {name}")))?;
        if b < 2 {
            return Err(usage("base must be at least 2"));
        }
        return Ok(bratteli::one_vertex_diagram(&[b], 1));
    }
    let s = builtin_substitution(name)?;
    bratteli::from_substitution(&s).map_err(usage)
}

/// {cells: nested lists, rules: {cell: [targets]}, resolution}
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GensubDoc {
    pub cells: Vec<CellSpec>,
    pub rules: BTreeMap<String, Vec<String>>,
    pub resolution: usize,
}

impl GensubDoc {
    pub fn build(&self) -> CliResult<GeneralizedSubstitution> {
        let space = AlphabetSpace::from_specs(&self.cells).map_err(usage)?;
        GeneralizedSubstitution::from_labels(space, &self.rules, self.resolution).map_err(usage)
    }
}
