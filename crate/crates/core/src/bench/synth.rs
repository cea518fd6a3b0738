//! Seeded synthetic corpus with planted facts and cross-domain bridge
//! entities, plus task files whose gold labels follow from construction.
//!
//! Every document names one unique entity and states two numeric facts
//! about it (`The {attribute} of {Entity} is {value} {unit}.`). A multi-hop
//! question links two documents in different domains: the first names the
//! entity's producer, the second states that producer's headquarters city.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_items, BenchError, Hops, Task1Item, Task2Item, Task3Item};
use crate::digest::sha256;
use crate::ingestion::{chunk, ChunkPolicy};
use crate::object_store::{mint_pid, Pid};
use crate::workspace::{Sidecar, SIDECAR_SUFFIX};

pub const CORPUS_DIR: &str = "corpus";
pub const MANIFEST_FILE: &str = "synthetic.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub domains: usize,
    pub docs_per_domain: usize,
    pub questions: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            domains: 3,
            docs_per_domain: 10,
            questions: 20,
        }
    }
}

struct Theme {
    name: &'static str,
    title_words: &'static [&'static str],
    suffixes: &'static [&'static str],
    attrs: &'static [(&'static str, &'static str, u32, u32)],
    nouns: &'static [&'static str],
    adjs: &'static [&'static str],
}

const THEMES: &[Theme] = &[
    Theme {
        name: "materials",
        title_words: &["Thermal Study", "Phase Survey", "Mechanical Review", "Coating Report"],
        suffixes: &["ite", "ium", "ide"],
        attrs: &[
            ("melting point", "K", 1200, 3800),
            ("bulk modulus", "GPa", 80, 420),
            ("fracture toughness", "MPa", 3, 40),
            ("thermal conductivity", "W/mK", 5, 160),
        ],
        nouns: &[
            "lattice",
            "coating",
            "grain",
            "sintering",
            "oxidation",
            "alloy",
            "ceramic",
            "furnace",
            "powder",
            "creep",
        ],
        adjs: &[
            "layered",
            "dense",
            "brittle",
            "stable",
            "porous",
            "refractory",
            "annealed",
        ],
    },
    Theme {
        name: "medicine",
        title_words: &["Clinical Brief", "Dosage Review", "Trial Summary", "Pharmacology Note"],
        suffixes: &["ol", "ex", "amab"],
        attrs: &[
            ("typical dosage", "mg", 5, 900),
            ("elimination half life", "h", 2, 72),
            ("oral bioavailability", "%", 10, 95),
            ("peak concentration", "ng/mL", 20, 800),
        ],
        nouns: &[
            "cohort",
            "placebo",
            "clearance",
            "enzyme",
            "receptor",
            "infusion",
            "plasma",
            "symptom",
            "trial",
            "dose",
        ],
        adjs: &[
            "randomized",
            "chronic",
            "acute",
            "tolerable",
            "hepatic",
            "renal",
            "adverse",
        ],
    },
    Theme {
        name: "energy",
        title_words: &[
            "Plant Overview",
            "Grid Assessment",
            "Capacity Report",
            "Operations Digest",
        ],
        suffixes: &["ford", "mere", "dale"],
        attrs: &[
            ("rated capacity", "MW", 40, 2400),
            ("conversion efficiency", "%", 18, 62),
            ("annual output", "GWh", 100, 9000),
            ("operating temperature", "K", 320, 900),
        ],
        nouns: &[
            "turbine",
            "inverter",
            "storage",
            "transmission",
            "boiler",
            "feeder",
            "substation",
            "load",
            "reactor",
            "panel",
        ],
        adjs: &[
            "baseload",
            "intermittent",
            "modular",
            "offshore",
            "regional",
            "peak",
            "retrofitted",
        ],
    },
    Theme {
        name: "agriculture",
        title_words: &["Crop Trial", "Soil Survey", "Harvest Report", "Field Notes"],
        suffixes: &["wheat", "corn", "bean"],
        attrs: &[
            ("average yield", "t", 2, 14),
            ("growing season", "days", 60, 220),
            ("water requirement", "mm", 250, 1400),
            ("protein content", "%", 6, 40),
        ],
        nouns: &[
            "irrigation",
            "fertilizer",
            "seedling",
            "pest",
            "tillage",
            "canopy",
            "rootstock",
            "rotation",
            "drought",
            "harvest",
        ],
        adjs: &["irrigated", "organic", "hardy", "early", "saline", "rainfed", "hybrid"],
    },
];

const SYLLABLES: &[&str] = &[
    "zor", "van", "kel", "mar", "tri", "lum", "qua", "dex", "bro", "sil", "nav", "pel", "ros", "tav", "mun", "gar",
    "fen", "lor", "vek", "sha", "dor", "hal", "jin", "cor", "bel", "ner", "tox", "wil", "yar", "pim",
];

const ORG_KINDS: &[&str] = &["Labs", "Industries", "Works", "Group"];
const CITY_SUFFIXES: &[&str] = &["burg", "ova", "stad", "port", "ville"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFact {
    pub attribute: String,
    pub value: String,
    pub unit: String,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthDoc {
    pub domain: String,
    /// Path relative to the output directory.
    pub path: String,
    pub pid: Pid,
    pub title: String,
    pub entity: String,
    pub facts: Vec<PlantedFact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub spec: SynthSpec,
    pub domains: Vec<String>,
    pub docs: Vec<SynthDoc>,
    pub task1: String,
    pub task2: String,
    pub task3: String,
}

impl SynthManifest {
    pub fn corpus_dir(&self, root: &Path, domain: &str) -> PathBuf {
        root.join(CORPUS_DIR).join(domain)
    }
}

struct Names {
    used: HashSet<String>,
}

impl Names {
    fn fresh(&mut self, rng: &mut ChaCha8Rng, suffix: &str) -> String {
        loop {
            let n = rng.random_range(2..=3);
            let mut s: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
            s.push_str(suffix);
            let mut c = s.chars();
            let name: String = c.next().expect("non-empty").to_uppercase().chain(c).collect();
            if self.used.insert(name.to_lowercase()) {
                return name;
            }
        }
    }
}

fn filler(rng: &mut ChaCha8Rng, t: &Theme) -> String {
    let n = |rng: &mut ChaCha8Rng| *t.nouns.choose(rng).expect("non-empty");
    let a = |rng: &mut ChaCha8Rng| *t.adjs.choose(rng).expect("non-empty");
    match rng.random_range(0..8) {
        0 => format!(
            "Samples were prepared with {} {} and examined under {} conditions.",
            a(rng),
            n(rng),
            a(rng)
        ),
        1 => format!(
            "Earlier studies compared {} with {} across several {} settings.",
            n(rng),
            n(rng),
            n(rng)
        ),
        2 => format!(
            "Observers noted that the {} remained {} throughout the {} campaign.",
            n(rng),
            a(rng),
            n(rng)
        ),
        3 => format!(
            "Further work will address the {} and its influence on {}.",
            n(rng),
            n(rng)
        ),
        4 => format!("Results suggest a {} link between {} and {}.", a(rng), n(rng), n(rng)),
        5 => format!(
            "Field reports describe {} {} during routine {} checks.",
            a(rng),
            n(rng),
            n(rng)
        ),
        6 => format!("Several teams recorded {} trends over multiple seasons.", n(rng)),
        _ => format!(
            "Data on {} were collected from {} sources and reviewed twice.",
            n(rng),
            a(rng)
        ),
    }
}

fn paragraph(rng: &mut ChaCha8Rng, t: &Theme) -> String {
    let k = rng.random_range(3..=5);
    (0..k).map(|_| filler(rng, t)).collect::<Vec<_>>().join(" ")
}

struct Draft {
    domain: String,
    theme: usize,
    file: String,
    title: String,
    entity: String,
    facts: Vec<PlantedFact>,
    intro: String,
    planted: Vec<String>,
    extra: Vec<String>,
    fillers: Vec<String>,
    position: usize,
}

impl Draft {
    fn text(&self) -> String {
        let mut paras = vec![format!("# {}", self.title), self.intro.clone()];
        for (i, f) in self.fillers.iter().enumerate() {
            if i == self.position {
                paras.push(self.planted.join(" "));
            }
            paras.push(f.clone());
        }
        if self.position >= self.fillers.len() {
            paras.push(self.planted.join(" "));
        }
        paras.extend(self.extra.iter().cloned());
        paras.join("\n\n") + "\n"
    }
}

/// The chunk of `text` that contains `sentence`, under the default policy.
fn gold_context(pid: &Pid, text: &str, sentence: &str) -> String {
    chunk(pid, text, &ChunkPolicy::default())
        .ok()
        .and_then(|cs| cs.into_iter().find(|c| c.text.contains(sentence)))
        .map(|c| c.text)
        .unwrap_or_else(|| sentence.to_string())
}

/// Write the corpus under `out/corpus/{domain}/` and the task files under
/// `out/`. The same seed and spec always produce the same bytes.
pub fn gen_synthetic(seed: u64, spec: SynthSpec, out: &Path) -> Result<SynthManifest, BenchError> {
    if spec.domains == 0 || spec.docs_per_domain == 0 || spec.questions == 0 {
        return Err(BenchError::Invalid("synthetic spec counts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Names { used: HashSet::new() };
    let domains: Vec<(String, usize)> = (0..spec.domains)
        .map(|d| {
            let t = d % THEMES.len();
            let name = if d < THEMES.len() {
                THEMES[t].name.to_string()
            } else {
                format!("{}{}", THEMES[t].name, d / THEMES.len() + 1)
            };
            (name, t)
        })
        .collect();

    let mut drafts: Vec<Draft> = Vec::new();
    for (domain, ti) in &domains {
        let t = &THEMES[*ti];
        for i in 0..spec.docs_per_domain {
            let suffix = *t.suffixes.choose(&mut rng).expect("non-empty");
            let entity = names.fresh(&mut rng, suffix);
            let title = format!("{entity} {}", t.title_words.choose(&mut rng).expect("non-empty"));
            let mut attrs: Vec<usize> = (0..t.attrs.len()).collect();
            let mut facts = Vec::new();
            for _ in 0..2 {
                let k = attrs.remove(rng.random_range(0..attrs.len()));
                let (attr, unit, lo, hi) = t.attrs[k];
                let value = rng.random_range(lo..=hi).to_string();
                facts.push(PlantedFact {
                    attribute: attr.into(),
                    sentence: format!("The {attr} of {entity} is {value} {unit}."),
                    value,
                    unit: unit.into(),
                });
            }
            let intro = format!(
                "Interest in {entity} has grown because of its {} {}. {} {}",
                t.adjs.choose(&mut rng).expect("non-empty"),
                t.nouns.choose(&mut rng).expect("non-empty"),
                filler(&mut rng, t),
                filler(&mut rng, t)
            );
            let planted = vec![
                "Measurements confirmed the following values.".to_string(),
                facts[0].sentence.clone(),
                filler(&mut rng, t),
                facts[1].sentence.clone(),
            ];
            let n_fill = rng.random_range(1..=7);
            let fillers: Vec<String> = (0..n_fill).map(|_| paragraph(&mut rng, t)).collect();
            let position = rng.random_range(0..=fillers.len());
            drafts.push(Draft {
                domain: domain.clone(),
                theme: *ti,
                file: format!("doc_{i:02}.md"),
                title,
                entity,
                facts,
                intro,
                planted,
                extra: vec![],
                fillers,
                position,
            });
        }
    }

    // Bridges: source doc (entity producer) and target doc (producer city),
    // in adjacent domains when there is more than one.
    let n_docs = drafts.len();
    let n_multi_wanted = spec.questions / 2;
    let per = spec.docs_per_domain;
    let d_count = spec.domains;
    let mut bridges: Vec<(usize, usize, String, String)> = Vec::new();
    for q in 0..n_multi_wanted {
        let (a, b) = if d_count > 1 {
            let d = q % d_count;
            let p = (q / d_count) * 2;
            if p + 1 >= per {
                break;
            }
            (d * per + p, ((d + 1) % d_count) * per + p + 1)
        } else {
            let p = q * 2;
            if p + 1 >= per {
                break;
            }
            (p, p + 1)
        };
        let org_name = names.fresh(&mut rng, "");
        let org = format!("{org_name} {}", ORG_KINDS.choose(&mut rng).expect("non-empty"));
        let city_suffix = *CITY_SUFFIXES.choose(&mut rng).expect("non-empty");
        let city = names.fresh(&mut rng, city_suffix);
        let ent = drafts[a].entity.clone();
        drafts[a].planted.push(format!("The producer of {ent} is {org}."));
        drafts[b].extra.push(format!(
            "Trade records list {org} among the regional suppliers. The headquarters city of {org} is {city}."
        ));
        bridges.push((a, b, org, city));
    }

    let mut docs = Vec::new();
    let mut texts = Vec::new();
    for (i, d) in drafts.iter().enumerate() {
        let text = d.text();
        let dir = out.join(CORPUS_DIR).join(&d.domain);
        std::fs::create_dir_all(&dir).map_err(|source| BenchError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join(&d.file);
        std::fs::write(&path, &text).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let sidecar = Sidecar {
            title: Some(d.title.clone()),
            source: Some(format!("synthetic://{}/{}", d.domain, d.file)),
            timestamp: Some(DateTime::<Utc>::UNIX_EPOCH + Duration::days(19_723 + i as i64)),
            media_type: None,
            labels: BTreeSet::from([THEMES[d.theme].name.to_string()]),
        };
        let side = PathBuf::from(format!("{}{SIDECAR_SUFFIX}", path.display()));
        std::fs::write(
            &side,
            serde_json::to_string_pretty(&sidecar).expect("serializable") + "\n",
        )
        .map_err(|source| BenchError::Io {
            path: side.display().to_string(),
            source,
        })?;
        let pid = mint_pid(&d.domain, &sha256(text.as_bytes()), None, None)
            .map_err(|e| BenchError::Invalid(e.to_string()))?;
        docs.push(SynthDoc {
            domain: d.domain.clone(),
            path: format!("{CORPUS_DIR}/{}/{}", d.domain, d.file),
            pid,
            title: d.title.clone(),
            entity: d.entity.clone(),
            facts: d.facts.clone(),
        });
        texts.push(text);
    }

    // Task 1: exact-title lookups, cycling through the documents.
    let task1: Vec<Task1Item> = (0..spec.questions)
        .map(|q| {
            let d = &docs[(q * 7) % n_docs];
            Task1Item {
                id: Some(format!("t1-{:03}", q + 1)),
                question: format!("Which document is titled \"{}\"?", d.title),
                relevant_pids: BTreeSet::from([d.pid.clone()]),
            }
        })
        .collect();

    // Task 2: multi-hop bridges first, single-hop facts for the rest.
    let mut task2: Vec<Task2Item> = Vec::new();
    for (a, b, org, city) in &bridges {
        let (da, db) = (&docs[*a], &docs[*b]);
        let s1 = format!("The producer of {} is {org}.", da.entity);
        let s2 = format!("The headquarters city of {org} is {city}.");
        task2.push(Task2Item {
            id: None,
            question: format!("What is the headquarters city of the producer of {}?", da.entity),
            gold_answer: format!("{s1} {s2}"),
            gold_contexts: vec![
                gold_context(&da.pid, &texts[*a], &s1),
                gold_context(&db.pid, &texts[*b], &s2),
            ],
            hops: Hops::Multi,
            domains: BTreeSet::from([da.domain.clone(), db.domain.clone()]),
            cross_domain: da.domain != db.domain,
            answer_key: Some(city.clone()),
            source_pids: BTreeSet::from([da.pid.clone(), db.pid.clone()]),
        });
    }
    let mut q = 0;
    while task2.len() < spec.questions {
        let di = (q * 3 + 1) % n_docs;
        let d = &docs[di];
        let f = &d.facts[(q / n_docs) % d.facts.len()];
        task2.push(Task2Item {
            id: None,
            question: format!("What is the {} of {}?", f.attribute, d.entity),
            gold_answer: f.sentence.clone(),
            gold_contexts: vec![gold_context(&d.pid, &texts[di], &f.sentence)],
            hops: Hops::Single,
            domains: BTreeSet::from([d.domain.clone()]),
            cross_domain: false,
            answer_key: Some(format!("{} {}", f.value, f.unit)),
            source_pids: BTreeSet::from([d.pid.clone()]),
        });
        q += 1;
    }
    for (i, it) in task2.iter_mut().enumerate() {
        it.id = Some(format!("t2-{:03}", i + 1));
    }

    // Task 3: alternate single-domain and cross-domain topics.
    let n3 = spec.questions.div_ceil(4);
    let task3: Vec<Task3Item> = (0..n3)
        .map(|i| {
            let id = Some(format!("t3-{:03}", i + 1));
            match bridges.get(i / 2).filter(|_| i % 2 == 1) {
                Some((a, b, org, _)) => Task3Item {
                    id,
                    topic: format!(
                        "Write a report on the producer of {} and the operations of {org}",
                        docs[*a].entity
                    ),
                    domains: BTreeSet::from([docs[*a].domain.clone(), docs[*b].domain.clone()]),
                },
                None => {
                    let d = &docs[(i * 5) % n_docs];
                    Task3Item {
                        id,
                        topic: format!(
                            "Write a report on the {} and {} of {}",
                            d.facts[0].attribute, d.facts[1].attribute, d.entity
                        ),
                        domains: BTreeSet::from([d.domain.clone()]),
                    }
                }
            }
        })
        .collect();

    write_items(&out.join("task1.jsonl"), &task1)?;
    write_items(&out.join("task2.jsonl"), &task2)?;
    write_items(&out.join("task3.jsonl"), &task3)?;
    let manifest = SynthManifest {
        seed,
        spec,
        domains: domains.into_iter().map(|(d, _)| d).collect(),
        docs,
        task1: "task1.jsonl".into(),
        task2: "task2.jsonl".into(),
        task3: "task3.jsonl".into(),
    };
    let mp = out.join(MANIFEST_FILE);
    std::fs::write(
        &mp,
        serde_json::to_string_pretty(&manifest).expect("serializable") + "\n",
    )
    .map_err(|source| BenchError::Io {
        path: mp.display().to_string(),
        source,
    })?;
    Ok(manifest)
}

/// Planted facts by document pid.
pub fn facts_by_pid(m: &SynthManifest) -> BTreeMap<Pid, Vec<PlantedFact>> {
    m.docs.iter().map(|d| (d.pid.clone(), d.facts.clone())).collect()
}
