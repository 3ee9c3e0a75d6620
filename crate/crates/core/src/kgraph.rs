//! Concept graph: canonical concepts, the 7-type relation taxonomy, triplet
//! storage with provenance, graph queries and JSONL persistence.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Concept {
    pub canonical: String,
    pub display: String,
}

impl Concept {
    pub fn new(surface: &str) -> Result<Self> {
        canonicalize_concept(surface)
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display)
    }
}

const QUOTES: &[char] = &['"', '\'', '`', '“', '”', '‘', '’'];
const TRAILING: &[char] = &['.', ',', ';', ':'];

/// Lowercase, trim, collapse whitespace, strip surrounding quotes and
/// trailing `.,;:`. The display form keeps the original casing.
pub fn canonicalize_concept(surface: &str) -> Result<Concept> {
    let mut s = surface.trim();
    loop {
        let before = s.len();
        s = s.trim_end_matches(TRAILING).trim();
        if s.len() >= 2 {
            let first = s.chars().next().unwrap();
            let last = s.chars().next_back().unwrap();
            if QUOTES.contains(&first) && QUOTES.contains(&last) {
                s = s[first.len_utf8()..s.len() - last.len_utf8()].trim();
            }
        }
        if s.len() == before {
            break;
        }
    }
    let display = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let canonical = display.to_lowercase();
    if canonical.is_empty() || canonical.chars().all(|c| QUOTES.contains(&c)) {
        return Err(Error::EmptyConcept(surface.to_string()));
    }
    Ok(Concept { canonical, display })
}

/// Canonical form of a surface string, or `None` when nothing is left.
pub fn canonical_key(surface: &str) -> Option<String> {
    canonicalize_concept(surface).ok().map(|c| c.canonical)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationType {
    Compare,
    PartOf,
    Conjunction,
    EvaluateFor,
    IsAPrerequisiteOf,
    UsedFor,
    HyponymOf,
}

impl RelationType {
    pub const ALL: [RelationType; 7] = [
        RelationType::Compare,
        RelationType::PartOf,
        RelationType::Conjunction,
        RelationType::EvaluateFor,
        RelationType::IsAPrerequisiteOf,
        RelationType::UsedFor,
        RelationType::HyponymOf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::Compare => "Compare",
            RelationType::PartOf => "Part-of",
            RelationType::Conjunction => "Conjunction",
            RelationType::EvaluateFor => "Evaluate-for",
            RelationType::IsAPrerequisiteOf => "Is-a-Prerequisite-of",
            RelationType::UsedFor => "Used-for",
            RelationType::HyponymOf => "Hyponym-Of",
        }
    }

    /// Compare and Conjunction are symmetric; everything else reads head -> tail.
    pub fn is_directional(self) -> bool {
        !matches!(self, RelationType::Compare | RelationType::Conjunction)
    }

    /// Resolves canonical ids and the accepted alias spellings, ignoring case,
    /// hyphens, underscores and spaces.
    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' ' | '\t'))
            .flat_map(char::to_lowercase)
            .collect();
        Some(match key.as_str() {
            "compare" => RelationType::Compare,
            "partof" => RelationType::PartOf,
            "conjunction" => RelationType::Conjunction,
            "evaluatefor" => RelationType::EvaluateFor,
            "isaprerequisiteof" | "prerequisiteof" => RelationType::IsAPrerequisiteOf,
            "usedfor" => RelationType::UsedFor,
            "hyponymof" => RelationType::HyponymOf,
            _ => return None,
        })
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s).ok_or_else(|| Error::UnknownRelation(s.to_string()))
    }
}

impl Serialize for RelationType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RelationType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        RelationType::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown relation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extraction,
    Fusion,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: Stage,
    pub model_id: String,
    /// Canonical form of the seed concept that produced the triplet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_concept: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunk_ids: Vec<String>,
}

impl Provenance {
    pub fn new(stage: Stage, model_id: impl Into<String>) -> Self {
        Self {
            stage,
            model_id: model_id.into(),
            query_concept: None,
            chunk_ids: Vec::new(),
        }
    }

    pub fn with_query(mut self, q: &str) -> Self {
        self.query_concept = Some(q.to_string());
        self
    }

    pub fn with_chunks(mut self, ids: Vec<String>) -> Self {
        self.chunk_ids = ids;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub head: Concept,
    pub relation: RelationType,
    pub tail: Concept,
    pub provenance: Vec<Provenance>,
}

impl Triplet {
    /// Builds a triplet, rejecting self-loops and putting symmetric relations
    /// into lexicographic canonical order.
    pub fn new(head: Concept, relation: RelationType, tail: Concept) -> Result<Self> {
        if head.canonical == tail.canonical {
            return Err(Error::SelfLoop(head.canonical));
        }
        let (head, tail) = if !relation.is_directional() && tail.canonical < head.canonical {
            (tail, head)
        } else {
            (head, tail)
        };
        Ok(Self {
            head,
            relation,
            tail,
            provenance: Vec::new(),
        })
    }

    pub fn from_surface(head: &str, relation: RelationType, tail: &str) -> Result<Self> {
        Self::new(
            canonicalize_concept(head)?,
            relation,
            canonicalize_concept(tail)?,
        )
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance.push(p);
        self
    }

    pub fn key(&self) -> TripletKey {
        TripletKey {
            head: self.head.canonical.clone(),
            relation: self.relation,
            tail: self.tail.canonical.clone(),
        }
    }
}

/// Identity of a stored triplet: canonical head, relation, canonical tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripletKey {
    pub head: String,
    pub relation: RelationType,
    pub tail: String,
}

impl TripletKey {
    /// Unordered concept pair, smaller canonical first.
    pub fn pair(&self) -> (String, String) {
        if self.head <= self.tail {
            (self.head.clone(), self.tail.clone())
        } else {
            (self.tail.clone(), self.head.clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Both,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "in" => Ok(Direction::In),
            "out" => Ok(Direction::Out),
            "both" | "any" => Ok(Direction::Both),
            other => Err(Error::InvalidInput(format!("unknown direction {other:?}"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::Both => "both",
        })
    }
}

/// How a path search may cross an edge of a given relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Traversal {
    Forward,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub pair: (String, String),
    pub triplets: Vec<Triplet>,
}

/// Triplet set keyed by canonical identity, with an incidence index and a
/// tally of observed surface forms per concept.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triplets: BTreeMap<TripletKey, Vec<Provenance>>,
    incident: BTreeMap<String, BTreeSet<TripletKey>>,
    surfaces: BTreeMap<String, BTreeMap<String, usize>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.triplets == other.triplets
            && self
                .incident
                .keys()
                .all(|c| self.display_of(c) == other.display_of(c))
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn contains(&self, key: &TripletKey) -> bool {
        self.triplets.contains_key(key)
    }

    pub fn provenance(&self, key: &TripletKey) -> Option<&[Provenance]> {
        self.triplets.get(key).map(Vec::as_slice)
    }

    /// Most frequently observed surface form; ties go to the smaller string.
    pub fn display_of(&self, canonical: &str) -> Option<&str> {
        self.surfaces.get(canonical).and_then(|tally| {
            tally
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(s, _)| s.as_str())
        })
    }

    pub fn concept(&self, canonical: &str) -> Option<Concept> {
        self.display_of(canonical).map(|d| Concept {
            canonical: canonical.to_string(),
            display: d.to_string(),
        })
    }

    /// Canonical names of every concept with at least one incident triplet.
    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.incident.keys().map(String::as_str)
    }

    pub fn has_concept(&self, canonical: &str) -> bool {
        self.incident.contains_key(canonical)
    }

    fn materialize(&self, key: &TripletKey, prov: &[Provenance]) -> Triplet {
        let concept = |c: &str| Concept {
            canonical: c.to_string(),
            display: self.display_of(c).unwrap_or(c).to_string(),
        };
        Triplet {
            head: concept(&key.head),
            relation: key.relation,
            tail: concept(&key.tail),
            provenance: prov.to_vec(),
        }
    }

    /// Triplets in `(head, relation, tail)` canonical order.
    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        self.triplets.iter().map(|(k, p)| self.materialize(k, p))
    }

    pub fn keys(&self) -> impl Iterator<Item = &TripletKey> {
        self.triplets.keys()
    }

    pub fn get(&self, key: &TripletKey) -> Option<Triplet> {
        self.triplets.get(key).map(|p| self.materialize(key, p))
    }

    fn tally(&mut self, c: &Concept) {
        *self
            .surfaces
            .entry(c.canonical.clone())
            .or_default()
            .entry(c.display.clone())
            .or_default() += 1;
    }

    /// Adds a triplet, appending its provenance when the same
    /// `(head, relation, tail)` is already stored.
    pub fn insert(&mut self, t: Triplet) -> Result<()> {
        // Re-run the constructor checks so hand-built values cannot break invariants.
        let provenance = t.provenance;
        let t = Triplet::new(t.head, t.relation, t.tail)?;
        let key = t.key();
        self.tally(&t.head);
        self.tally(&t.tail);
        self.incident
            .entry(key.head.clone())
            .or_default()
            .insert(key.clone());
        self.incident
            .entry(key.tail.clone())
            .or_default()
            .insert(key.clone());
        self.triplets.entry(key).or_default().extend(provenance);
        Ok(())
    }

    pub fn remove(&mut self, key: &TripletKey) -> Option<Vec<Provenance>> {
        let prov = self.triplets.remove(key)?;
        for c in [&key.head, &key.tail] {
            if let Some(set) = self.incident.get_mut(c) {
                set.remove(key);
                if set.is_empty() {
                    self.incident.remove(c);
                    self.surfaces.remove(c);
                }
            }
        }
        Some(prov)
    }

    /// Every triplet with `q` as head or tail.
    pub fn subgraph(&self, q: &str) -> KnowledgeGraph {
        let mut out = KnowledgeGraph::new();
        if let Some(keys) = self.incident.get(q) {
            for key in keys {
                let t = self.materialize(key, &self.triplets[key]);
                out.copy_in(t, self);
            }
        }
        out
    }

    fn copy_in(&mut self, t: Triplet, from: &KnowledgeGraph) {
        let key = t.key();
        for c in [&key.head, &key.tail] {
            if let Some(tally) = from.surfaces.get(c) {
                self.surfaces.insert(c.clone(), tally.clone());
            }
            self.incident
                .entry(c.clone())
                .or_default()
                .insert(key.clone());
        }
        self.triplets.insert(key, t.provenance);
    }

    /// Triplets between `a` and `b` in either direction.
    pub fn between(&self, a: &str, b: &str) -> Vec<Triplet> {
        let Some(keys) = self.incident.get(a) else {
            return Vec::new();
        };
        keys.iter()
            .filter(|k| (k.head == a && k.tail == b) || (k.head == b && k.tail == a))
            .map(|k| self.materialize(k, &self.triplets[k]))
            .collect()
    }

    /// Unordered concept pairs linked by two or more triplets, sorted by pair.
    pub fn find_conflicts(&self) -> Vec<Conflict> {
        let mut by_pair: BTreeMap<(String, String), Vec<&TripletKey>> = BTreeMap::new();
        for key in self.triplets.keys() {
            by_pair.entry(key.pair()).or_default().push(key);
        }
        by_pair
            .into_iter()
            .filter(|(_, keys)| keys.len() > 1)
            .map(|(pair, keys)| Conflict {
                pair,
                triplets: keys
                    .into_iter()
                    .map(|k| self.materialize(k, &self.triplets[k]))
                    .collect(),
            })
            .collect()
    }

    /// Concepts one edge away from `c` in the given direction. Symmetric
    /// relations are always crossed both ways.
    fn step(
        &self,
        c: &str,
        direction: Direction,
        filter: Option<&BTreeSet<RelationType>>,
    ) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        let Some(keys) = self.incident.get(c) else {
            return out;
        };
        for k in keys {
            if filter.is_some_and(|f| !f.contains(&k.relation)) {
                continue;
            }
            let both = !k.relation.is_directional() || direction == Direction::Both;
            if k.head == c && (both || direction == Direction::Out) {
                out.insert(k.tail.as_str());
            }
            if k.tail == c && (both || direction == Direction::In) {
                out.insert(k.head.as_str());
            }
        }
        out
    }

    /// Breadth-first neighborhood up to `depth` hops, excluding `c` itself.
    pub fn neighbors(
        &self,
        c: &str,
        direction: Direction,
        filter: Option<&BTreeSet<RelationType>>,
        depth: usize,
    ) -> Result<BTreeSet<String>> {
        if depth == 0 {
            return Err(Error::InvalidInput(
                "neighbor depth must be at least 1".into(),
            ));
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut frontier: BTreeSet<&str> = BTreeSet::from([c]);
        for _ in 0..depth {
            let mut next = BTreeSet::new();
            for node in &frontier {
                for n in self.step(node, direction, filter) {
                    if n != c && seen.insert(n) {
                        next.insert(n);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(seen.into_iter().map(str::to_string).collect())
    }

    /// Shortest path with directional relations followed head -> tail and
    /// symmetric ones both ways.
    pub fn shortest_path(&self, a: &str, b: &str) -> Result<Option<Vec<String>>> {
        self.shortest_path_with(a, b, |r| {
            if r.is_directional() {
                Traversal::Forward
            } else {
                Traversal::Both
            }
        })
    }

    /// BFS shortest path where `policy` decides how each relation may be
    /// crossed. Neighbors are expanded in lexicographic order, so among equal
    /// length paths the one through smaller names is found first.
    pub fn shortest_path_with(
        &self,
        a: &str,
        b: &str,
        policy: impl Fn(RelationType) -> Traversal,
    ) -> Result<Option<Vec<String>>> {
        if a == b {
            return Err(Error::InvalidInput(format!(
                "path endpoints are the same concept {a:?}"
            )));
        }
        if !self.has_concept(a) || !self.has_concept(b) {
            return Ok(None);
        }
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([a]);
        parent.insert(a, a);
        while let Some(node) = queue.pop_front() {
            if node == b {
                let mut path = vec![b.to_string()];
                let mut cur = b;
                while cur != a {
                    cur = parent[cur];
                    path.push(cur.to_string());
                }
                path.reverse();
                return Ok(Some(path));
            }
            let mut next: BTreeSet<&str> = BTreeSet::new();
            for k in &self.incident[node] {
                let both = policy(k.relation) == Traversal::Both;
                if k.head == node {
                    next.insert(&k.tail);
                } else if both {
                    next.insert(&k.head);
                }
            }
            for n in next {
                if !parent.contains_key(n) {
                    parent.insert(n, node);
                    queue.push_back(n);
                }
            }
        }
        Ok(None)
    }

    pub fn relation_counts(&self) -> BTreeMap<RelationType, usize> {
        let mut counts: BTreeMap<RelationType, usize> =
            RelationType::ALL.iter().map(|r| (*r, 0)).collect();
        for key in self.triplets.keys() {
            *counts.entry(key.relation).or_default() += 1;
        }
        counts
    }

    /// Sorted JSONL, one triplet per line, each line newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (key, prov) in &self.triplets {
            let row = TripletRow {
                head: self.display_of(&key.head).unwrap_or(&key.head).to_string(),
                relation: key.relation,
                tail: self.display_of(&key.tail).unwrap_or(&key.tail).to_string(),
                provenance: prov.clone(),
            };
            out.push_str(&serde_json::to_string(&row).expect("triplet rows serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let mut kg = KnowledgeGraph::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: TripletRow = serde_json::from_str(line)
                .map_err(|e| Error::malformed(origin, i + 1, e.to_string()))?;
            let t = Triplet::from_surface(&row.head, row.relation, &row.tail)
                .map_err(|e| Error::malformed(origin, i + 1, e.to_string()))?;
            kg.insert(Triplet {
                provenance: row.provenance,
                ..t
            })?;
        }
        Ok(kg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, path)
    }

    /// Loads an expert graph from JSONL (same schema as [`KnowledgeGraph::save`])
    /// or headerless `head,relation,tail` CSV when the extension is `.csv`.
    /// Triplets without provenance get an expert record.
    pub fn load_expert(path: &Path) -> Result<Self> {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let raw = if is_csv {
            read_triplet_csv(path)?
        } else {
            Self::load(path)?
        };
        let mut kg = KnowledgeGraph::new();
        for mut t in raw.triplets() {
            if t.provenance.is_empty() {
                t.provenance.push(Provenance::new(Stage::Expert, "expert"));
            }
            kg.insert(t)?;
        }
        Ok(kg)
    }
}

fn read_triplet_csv(path: &Path) -> Result<KnowledgeGraph> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut kg = KnowledgeGraph::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::malformed(path, line, e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::malformed(
                path,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let relation = RelationType::parse(&rec[1]).ok_or_else(|| {
            Error::malformed(path, line, format!("unknown relation {:?}", &rec[1]))
        })?;
        let t = Triplet::from_surface(&rec[0], relation, &rec[2])
            .map_err(|e| Error::malformed(path, line, e.to_string()))?;
        kg.insert(t)?;
    }
    Ok(kg)
}

#[derive(Serialize, Deserialize)]
struct TripletRow {
    head: String,
    relation: RelationType,
    tail: String,
    #[serde(default)]
    provenance: Vec<Provenance>,
}
