use std::collections::{BTreeMap, BTreeSet};

use crate::ke::{relex, row_assignment, BindingMap, Placeholder, Template};
use crate::kb::{Dialogue, GraphKb, Speaker, TableKb, Turn};
use crate::tquery::{Selection, TableQuery};

use super::{GenError, SplitMix64};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    /// Number of table attributes, `name` included (2..=7).
    pub n_attributes: usize,
    pub n_templates: usize,
    pub oov_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 40,
            n_attributes: 6,
            n_templates: 20,
            oov_fraction: 0.5,
            seed: 13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub kb: TableKb,
    pub templates: Vec<Template>,
    /// The dialogue each template was delexicalized from.
    pub sources: Vec<Dialogue>,
    /// Every template over every in-vocabulary row.
    pub base: Vec<Dialogue>,
    /// Goal query of each base dialogue, by dialogue id.
    pub queries: BTreeMap<String, String>,
    /// Every template over one in-vocabulary row.
    pub test: Vec<Dialogue>,
    /// Every template over one out-of-vocabulary row.
    pub oov_test: Vec<Dialogue>,
    pub in_vocab_rows: Vec<usize>,
    pub oov_rows: Vec<usize>,
}

const ATTRIBUTES: [&str; 7] = ["name", "cuisine", "area", "price", "phone", "address", "postcode"];

const OPENERS: [(&str, &str); 4] = [
    ("i would like to know about [name_0]", "[name_0] is a great choice"),
    ("is [name_0] a good restaurant ?", "yes , [name_0] is very popular"),
    ("can you book a table at [name_0] ?", "i have booked a table at [name_0]"),
    ("tell me about [name_0]", "[name_0] is a nice place"),
];

/// (attribute, user turn, system turn)
const FOLLOW_UPS: [(&str, &str, &str); 7] = [
    ("name", "can you repeat the name ?", "the name is [name_0]"),
    ("cuisine", "what food do they serve ?", "[name_0] serves [cuisine_0] food"),
    ("area", "what part of town is it in ?", "it is in the [area_0] part of town"),
    ("price", "what is the price range ?", "[name_0] is in the [price_0] price range"),
    ("phone", "what is the phone number ?", "the phone number is [phone_0]"),
    ("address", "what is the address ?", "the address is [address_0]"),
    ("postcode", "what is the postcode ?", "the postcode is [postcode_0]"),
];

const CLOSING: (&str, &str) = ("thank you", "you are welcome , enjoy [name_0]");

/// Distinct pseudo-words of one fixed length, so none is a prefix of
/// another, avoiding the given literal words.
struct WordSource {
    rng: SplitMix64,
    used: BTreeSet<String>,
    literals: Vec<String>,
}

impl WordSource {
    fn new(seed: u64, literal_text: &[&str]) -> Self {
        let literals = literal_text
            .iter()
            .flat_map(|t| t.split_whitespace())
            .map(|w| w.to_lowercase())
            .collect();
        WordSource {
            rng: SplitMix64::new(seed),
            used: BTreeSet::new(),
            literals,
        }
    }

    fn word(&mut self) -> String {
        const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        loop {
            let w: String = (0..3)
                .flat_map(|_| {
                    let c = CONSONANTS[self.rng.below(CONSONANTS.len())] as char;
                    let v = VOWELS[self.rng.below(VOWELS.len())] as char;
                    [c, v]
                })
                .collect();
            let clash = self
                .literals
                .iter()
                .any(|l| l.starts_with(&w) || w.starts_with(l.as_str()));
            if !clash && self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn capitalized(&mut self) -> String {
        let w = self.word();
        let mut chars = w.chars();
        let first = chars.next().expect("non-empty word").to_ascii_uppercase();
        std::iter::once(first).chain(chars).collect()
    }
}

fn turn(speaker: Speaker, text: &str) -> Turn {
    Turn::new(speaker, text).expect("non-empty synthetic turn")
}

/// A restaurant KB, templates, and dialogue splits mirroring a base /
/// test / out-of-vocabulary test setup.
///
/// Every attribute value consists of tokens unique to its row, and every
/// system turn mentions the row, so a response can only be produced
/// correctly by a model that has seen that row. Base dialogues use
/// in-vocabulary rows only.
pub fn synth_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus, GenError> {
    if !(2..=ATTRIBUTES.len()).contains(&spec.n_attributes) {
        return Err(GenError::Spec(format!(
            "n_attributes must be in 2..={}",
            ATTRIBUTES.len()
        )));
    }
    if !(0.0..=1.0).contains(&spec.oov_fraction) {
        return Err(GenError::Spec("oov_fraction must be in [0, 1]".into()));
    }
    let n_oov = (spec.oov_fraction * spec.n_rows as f64).round() as usize;
    if n_oov == 0 || n_oov >= spec.n_rows {
        return Err(GenError::Spec(format!(
            "oov_fraction {} leaves an empty partition of {} rows",
            spec.oov_fraction, spec.n_rows
        )));
    }
    if spec.n_templates == 0 {
        return Err(GenError::Spec("n_templates must be positive".into()));
    }
    let attributes: Vec<&str> = ATTRIBUTES[..spec.n_attributes].to_vec();

    let mut literal_text: Vec<&str> = Vec::new();
    for (u, s) in OPENERS {
        literal_text.extend([u, s]);
    }
    for (_, u, s) in FOLLOW_UPS {
        literal_text.extend([u, s]);
    }
    literal_text.extend([CLOSING.0, CLOSING.1]);
    let mut words = WordSource::new(spec.seed, &literal_text);
    let mut rng = SplitMix64::new(spec.seed ^ 0x05EE_D0F7_AB1E);

    let mut rows = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        let row: Vec<String> = attributes
            .iter()
            .map(|&a| match a {
                "phone" => format!("01223{:06}", 100_000 + i * 7919 % 900_000),
                "address" => format!("{} road", words.word()),
                "postcode" => format!("cb{}", i + 10),
                _ => words.word(),
            })
            .collect();
        rows.push(row);
    }
    let kb = TableKb::new(
        "restaurant",
        attributes.iter().map(|a| a.to_string()).collect(),
        rows,
    )?;

    let mut order: Vec<usize> = (0..spec.n_rows).collect();
    rng.shuffle(&mut order);
    let mut oov_rows: Vec<usize> = order[..n_oov].to_vec();
    let mut in_vocab_rows: Vec<usize> = order[n_oov..].to_vec();
    oov_rows.sort_unstable();
    in_vocab_rows.sort_unstable();

    let follow_ups: Vec<usize> = (0..FOLLOW_UPS.len())
        .filter(|&i| attributes.contains(&FOLLOW_UPS[i].0))
        .collect();
    let mut shapes: BTreeSet<(usize, Vec<usize>, bool)> = BTreeSet::new();
    let mut shape_order = Vec::new();
    let mut attempts = 0;
    while shape_order.len() < spec.n_templates {
        attempts += 1;
        if attempts > 100_000 {
            return Err(GenError::Spec(format!(
                "cannot build {} distinct templates from {} attributes",
                spec.n_templates, spec.n_attributes
            )));
        }
        let opener = rng.below(OPENERS.len());
        let mut pool = follow_ups.clone();
        rng.shuffle(&mut pool);
        let k = 1 + rng.below(pool.len().min(3));
        pool.truncate(k);
        let closing = rng.below(2) == 1;
        let shape = (opener, pool, closing);
        if shapes.insert(shape.clone()) {
            shape_order.push(shape);
        }
    }

    let mut corpus = SyntheticCorpus {
        kb,
        templates: Vec::new(),
        sources: Vec::new(),
        base: Vec::new(),
        queries: BTreeMap::new(),
        test: Vec::new(),
        oov_test: Vec::new(),
        in_vocab_rows,
        oov_rows,
    };
    for (ti, (opener, follow, closing)) in shape_order.into_iter().enumerate() {
        let mut turns = vec![
            turn(Speaker::Usr, OPENERS[opener].0),
            turn(Speaker::Sys, OPENERS[opener].1),
        ];
        let mut used: BTreeSet<&str> = BTreeSet::from(["name"]);
        for &f in &follow {
            let (attr, u, s) = FOLLOW_UPS[f];
            used.insert(attr);
            turns.push(turn(Speaker::Usr, u));
            turns.push(turn(Speaker::Sys, s));
        }
        if closing {
            turns.push(turn(Speaker::Usr, CLOSING.0));
            turns.push(turn(Speaker::Sys, CLOSING.1));
        }
        let select: Vec<String> = attributes
            .iter()
            .filter(|a| used.contains(*a))
            .map(|a| a.to_string())
            .collect();
        let query = TableQuery {
            select: Selection::Attributes(select.clone()),
            from: "restaurant".into(),
            constraints: Vec::new(),
            group_by: None,
            having: None,
        }
        .to_string();

        let source_row = corpus.in_vocab_rows[0];
        let source_id = format!("base-t{ti:02}-r{source_row:02}");
        let mut binding = BindingMap::new();
        for a in &select {
            let idx = corpus.kb.attribute_index(a).expect("synthetic attribute");
            binding.insert(&Placeholder::new(a.clone(), 0), corpus.kb.rows()[source_row][idx].clone());
        }
        let template = Template {
            id: source_id.clone(),
            query: query.clone(),
            turns,
            binding,
        };
        let instantiate = |row: usize, id: String| {
            relex(&template, &row_assignment(&corpus.kb, &BTreeMap::from([(0, row)])), id)
                .map_err(|e| GenError::Template {
                    id: template.id.clone(),
                    source: e,
                })
        };
        for &r in &corpus.in_vocab_rows {
            let id = format!("base-t{ti:02}-r{r:02}");
            let d = instantiate(r, id.clone())?;
            if id == source_id {
                corpus.sources.push(d.clone());
            }
            corpus.queries.insert(id, query.clone());
            corpus.base.push(d);
        }
        let r = corpus.in_vocab_rows[rng.below(corpus.in_vocab_rows.len())];
        corpus.test.push(instantiate(r, format!("test-t{ti:02}-r{r:02}"))?);
        let r = corpus.oov_rows[rng.below(corpus.oov_rows.len())];
        corpus.oov_test.push(instantiate(r, format!("oov-t{ti:02}-r{r:02}"))?);
        corpus.templates.push(template);
    }
    Ok(corpus)
}

#[derive(Clone, Debug)]
pub struct SyntheticGraphCorpus {
    pub graph: GraphKb,
    pub dialogues: Vec<Dialogue>,
}

const GRAPH_LITERALS: [&str; 8] = [
    "Do you know ?",
    "Yes, stars .",
    "What else has been in?",
    "also starred in .",
    "I like movies.",
    "You might enjoy , a film.",
    "Who directed it? was directed by .",
    "Any films by ? directed and .",
];

/// A movie knowledge graph (actors, movies, genres, directors) with
/// dialogues that mention connected entities.
pub fn synth_graph_corpus(n_nodes: usize, n_dialogues: usize, seed: u64) -> Result<SyntheticGraphCorpus, GenError> {
    if n_nodes < 20 {
        return Err(GenError::Spec("a synthetic graph needs at least 20 nodes".into()));
    }
    let mut words = WordSource::new(seed, &GRAPH_LITERALS);
    let mut rng = SplitMix64::new(seed ^ 0x6A_F00D);
    let n_genres = (n_nodes / 20).max(2);
    let n_directors = n_nodes / 5;
    let n_actors = n_nodes / 4;
    let n_movies = n_nodes - n_genres - n_directors - n_actors;
    let genres: Vec<String> = (0..n_genres).map(|_| words.word()).collect();
    let directors: Vec<String> = (0..n_directors)
        .map(|_| format!("{} {}", words.capitalized(), words.capitalized()))
        .collect();
    let actors: Vec<String> = (0..n_actors)
        .map(|_| format!("{} {}", words.capitalized(), words.capitalized()))
        .collect();
    let movies: Vec<String> = (0..n_movies).map(|_| format!("The {}", words.capitalized())).collect();

    let mut triples: Vec<(String, String, String)> = Vec::new();
    let mut cast: Vec<Vec<usize>> = vec![Vec::new(); n_movies];
    let mut filmography: Vec<Vec<usize>> = vec![Vec::new(); n_actors];
    let mut directed: Vec<Vec<usize>> = vec![Vec::new(); n_directors];
    let mut genre_of = vec![0usize; n_movies];
    let mut director_of = vec![0usize; n_movies];
    for m in 0..n_movies {
        // Every actor appears at least once so no node is isolated.
        let first = m % n_actors;
        let second = (first + 1 + rng.below(n_actors - 1)) % n_actors;
        for a in [first, second] {
            cast[m].push(a);
            filmography[a].push(m);
            triples.push((actors[a].clone(), "ActorsIn".into(), movies[m].clone()));
        }
        genre_of[m] = if m < n_genres { m } else { rng.below(n_genres) };
        director_of[m] = if m < n_directors { m } else { rng.below(n_directors) };
        directed[director_of[m]].push(m);
        triples.push((movies[m].clone(), "HasGenre".into(), genres[genre_of[m]].clone()));
        triples.push((movies[m].clone(), "DirectedBy".into(), directors[director_of[m]].clone()));
    }
    let graph = GraphKb::from_triples(triples);

    let mut dialogues = Vec::with_capacity(n_dialogues);
    let mut attempts = 0;
    while dialogues.len() < n_dialogues {
        attempts += 1;
        if attempts > 100 * n_dialogues + 100 {
            return Err(GenError::Spec("graph too sparse for the requested dialogues".into()));
        }
        let id = format!("kg-{:03}", dialogues.len());
        let turns = match rng.below(3) {
            0 => {
                let m = rng.below(n_movies);
                let a = cast[m][rng.below(cast[m].len())];
                let others: Vec<usize> = filmography[a].iter().copied().filter(|&o| o != m).collect();
                if others.is_empty() {
                    continue;
                }
                let m2 = others[rng.below(others.len())];
                vec![
                    turn(Speaker::Usr, &format!("Do you know {}?", movies[m])),
                    turn(Speaker::Sys, &format!("Yes, {} stars {}.", movies[m], actors[a])),
                    turn(Speaker::Usr, &format!("What else has {} been in?", actors[a])),
                    turn(Speaker::Sys, &format!("{} also starred in {}.", actors[a], movies[m2])),
                ]
            }
            1 => {
                let m = rng.below(n_movies);
                let g = &genres[genre_of[m]];
                vec![
                    turn(Speaker::Usr, &format!("I like {g} movies.")),
                    turn(Speaker::Sys, &format!("You might enjoy {}, a {g} film.", movies[m])),
                    turn(Speaker::Usr, "Who directed it?"),
                    turn(Speaker::Sys, &format!("{} was directed by {}.", movies[m], directors[director_of[m]])),
                ]
            }
            _ => {
                let d = rng.below(n_directors);
                if directed[d].len() < 2 {
                    continue;
                }
                let m1 = directed[d][0];
                let m2 = directed[d][1 + rng.below(directed[d].len() - 1)];
                vec![
                    turn(Speaker::Usr, &format!("Any films by {}?", directors[d])),
                    turn(Speaker::Sys, &format!("{} directed {} and {}.", directors[d], movies[m1], movies[m2])),
                ]
            }
        };
        dialogues.push(Dialogue::new(id, turns)?);
    }
    Ok(SyntheticGraphCorpus { graph, dialogues })
}
