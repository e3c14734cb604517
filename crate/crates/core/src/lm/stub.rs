//! Hermetic backend: a retrieval "language model" over a small plan corpus
//! and a hash-projection embedder with a curated synonym and topic table.
//!
//! The sampler reads the few-shot prompt, finds the step index the query has
//! reached, and mostly copies the matching line of the in-prompt example plan
//! (sometimes paraphrased, sometimes from a neighbouring corpus plan,
//! occasionally garbled). Past the end of a plan it returns null samples.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{cosine, Embedding, LanguageModel, LmError, Sample, SampleRequest};
use crate::prompt::PromptLayout;
use crate::script::words;

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "some", "my", "your", "his", "her", "their", "its", "this", "that", "of",
];

/// Multi-word phrases rewritten before lookup.
const PHRASES: &[(&[&str], &[&str])] = &[
    (&["pick", "up"], &["grab"]),
    (&["turn", "on"], &["switch", "on"]),
    (&["turn", "off"], &["switch", "off"]),
    (&["go", "to"], &["walk", "to"]),
    (&["go", "into"], &["walk", "into"]),
    (&["sit", "down"], &["sit"]),
    (&["put", "into"], &["put", "in"]),
];

const SYNONYMS: &[(&str, &str)] = &[
    ("television", "tv"),
    ("telly", "tv"),
    ("couch", "sofa"),
    ("settee", "sofa"),
    ("pc", "computer"),
    ("laptop", "computer"),
    ("lamp", "light"),
    ("lights", "light"),
    ("plates", "plate"),
    ("cups", "cup"),
    ("glasses", "glass"),
    ("dishes", "dish"),
    ("novel", "book"),
    ("books", "book"),
    ("clothing", "clothes"),
    ("shirts", "clothes"),
    ("refrigerator", "fridge"),
    ("take", "grab"),
    ("place", "put"),
    ("into", "in"),
];

/// Topic clusters; members share a common direction in embedding space.
const CLUSTERS: &[(&str, &[&str])] = &[
    ("computing", &["computer", "keyboard", "mouse", "monitor", "email", "internet", "desk", "type", "video"]),
    ("games", &["games", "game", "play", "video", "board", "toy", "cards"]),
    ("screen", &["tv", "remote", "watch", "movie", "show", "channel", "video"]),
    ("laundry", &["wash", "washing", "clothes", "laundry", "machine", "detergent", "basket"]),
    ("cleaning", &["clean", "rag", "mop", "wipe", "floor", "dust", "tidy", "scrub", "sponge", "vacuum", "dirty"]),
    ("dining", &["plate", "cup", "dish", "fork", "knife", "spoon", "napkin", "table", "dinner", "lunch", "eat", "meal"]),
    ("drinking", &["glass", "cup", "mug", "water", "drink", "faucet", "sink", "bottle", "juice", "thirsty"]),
    ("reading", &["book", "newspaper", "magazine", "read", "bookshelf", "page"]),
    ("sleeping", &["bed", "bedroom", "sleep", "pillow", "blanket", "nap", "tired"]),
    ("lighting", &["light", "bulb", "dark", "bright"]),
    ("food", &["fridge", "milk", "food", "groceries", "juice", "apple", "bread", "cheese"]),
    ("seating", &["sofa", "chair", "sit", "relax", "rest"]),
];

const CLUSTER_WEIGHT: f64 = 0.7;

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325_u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic bag-of-concepts embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    token_cache: Arc<Mutex<HashMap<String, Arc<[f64]>>>>,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(512, 7)
    }
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEmbedder {
            dim,
            seed,
            token_cache: Arc::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lowercased content words after phrase and synonym rewriting.
    pub fn canonical_tokens(&self, text: &str) -> Vec<String> {
        let raw: Vec<String> = words(&text.replace(['_', '-'], " "))
            .into_iter()
            .filter(|w| !DETERMINERS.contains(&w.as_str()))
            .collect();
        let mut out = Vec::with_capacity(raw.len());
        let mut i = 0;
        'outer: while i < raw.len() {
            for (from, to) in PHRASES {
                if raw.len() - i >= from.len() && raw[i..i + from.len()].iter().zip(from.iter()).all(|(a, b)| a == b) {
                    out.extend(to.iter().map(|s| s.to_string()));
                    i += from.len();
                    continue 'outer;
                }
            }
            let w = raw[i].as_str();
            let canon = SYNONYMS.iter().find(|(from, _)| *from == w).map_or(w, |(_, to)| to);
            out.push(canon.to_string());
            i += 1;
        }
        out
    }

    fn hash_direction(&self, key: &str) -> Vec<f64> {
        let h = fnv1a(key.as_bytes(), self.seed);
        (0..self.dim)
            .map(|j| {
                let bits = splitmix(h ^ (j as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    fn unit(mut v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }

    /// Unit vector for one canonical token.
    pub fn token_vector(&self, token: &str) -> Arc<[f64]> {
        let mut cache = self.token_cache.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(v) = cache.get(token) {
            return v.clone();
        }
        let v: Arc<[f64]> = self.compute_token_vector(token).into();
        cache.insert(token.to_string(), v.clone());
        v
    }

    fn compute_token_vector(&self, token: &str) -> Vec<f64> {
        let mut v = Self::unit(self.hash_direction(token));
        for (name, members) in CLUSTERS {
            if members.contains(&token) {
                let c = Self::unit(self.hash_direction(&format!("#cluster:{name}")));
                v.iter_mut().zip(c).for_each(|(x, y)| *x += CLUSTER_WEIGHT * y);
            }
        }
        Self::unit(v)
    }

    pub fn embed_text(&self, text: &str) -> Embedding {
        let mut tokens = self.canonical_tokens(text);
        if tokens.is_empty() && !text.trim().is_empty() {
            tokens.push(text.trim().to_lowercase());
        }
        let mut acc = vec![0.0; self.dim];
        for t in &tokens {
            acc.iter_mut().zip(self.token_vector(t).iter()).for_each(|(a, b)| *a += b);
        }
        Embedding::new(acc)
    }
}

/// One corpus plan: a task and its steps as natural-language lines.
#[derive(Debug, Clone, PartialEq)]
pub struct StubPlan {
    pub task: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubConfig {
    /// Probability mass of copying from the in-prompt example.
    pub prompt_weight: f64,
    /// Number of nearest corpus plans sharing the remaining mass.
    pub corpus_neighbors: usize,
    pub paraphrase_rate: f64,
    pub noise_rate: f64,
    pub vocab_size: f64,
    /// Mixture weight of the context-relatedness term in token probabilities.
    pub context_weight: f64,
    /// Token similarities below this count as unrelated.
    pub relevance_floor: f64,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            prompt_weight: 0.85,
            corpus_neighbors: 2,
            paraphrase_rate: 0.25,
            noise_rate: 0.05,
            vocab_size: 1000.0,
            context_weight: 0.9,
            relevance_floor: 0.15,
        }
    }
}

const CHATTER: &[&str] = &[
    "and that is it",
    "done!",
    "then you are finished with the task",
    "repeat as needed",
];

#[derive(Debug, Clone)]
pub struct StubBackend {
    pub config: StubConfig,
    pub embedder: HashEmbedder,
    pub layout: PromptLayout,
    corpus: Vec<StubPlan>,
    corpus_embeddings: Vec<Embedding>,
}

impl StubBackend {
    pub fn new(corpus: Vec<StubPlan>) -> Self {
        Self::with_config(corpus, StubConfig::default())
    }

    pub fn with_config(corpus: Vec<StubPlan>, config: StubConfig) -> Self {
        let embedder = HashEmbedder::default();
        let corpus_embeddings = corpus.iter().map(|p| embedder.embed_text(&p.task)).collect();
        StubBackend {
            config,
            embedder,
            layout: PromptLayout::default(),
            corpus,
            corpus_embeddings,
        }
    }

    fn rng_for(&self, prompt: &str, seed: u64) -> ChaCha8Rng {
        let digest = Sha256::digest(prompt.as_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        for (i, b) in seed.to_le_bytes().iter().enumerate() {
            key[i] ^= b;
        }
        ChaCha8Rng::from_seed(key)
    }

    /// Weighted plan sources for the query: the in-prompt example, then the
    /// nearest corpus plans by task similarity.
    fn sources(&self, example: Option<&[String]>, query_task: &str) -> Vec<(f64, Vec<String>, f64)> {
        let mut sources = Vec::new();
        let mut rest = 1.0;
        if let Some(steps) = example {
            sources.push((self.config.prompt_weight, steps.to_vec(), -0.25));
            rest -= self.config.prompt_weight;
        }
        let query = self.embedder.embed_text(query_task);
        let mut ranked: Vec<(f64, usize)> = self
            .corpus_embeddings
            .iter()
            .enumerate()
            .filter(|(i, _)| example.is_none_or(|ex| ex != self.corpus[*i].steps.as_slice()))
            .filter_map(|(i, e)| cosine(&query, e).ok().map(|c| (c, i)))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let picked: Vec<usize> = ranked
            .iter()
            .take(self.config.corpus_neighbors)
            .map(|&(_, i)| i)
            .collect();
        for i in &picked {
            let w = rest / picked.len() as f64;
            sources.push((w, self.corpus[*i].steps.clone(), -0.8));
        }
        sources
    }

    fn paraphrase(line: &str) -> String {
        let rewrites: &[(&str, &str)] = &[
            ("walk to ", "go to the "),
            ("switch on ", "turn on the "),
            ("switch off ", "turn off the "),
            ("grab ", "pick up the "),
            ("sit on ", "sit down on the "),
            ("look at ", "look at the "),
            ("open ", "open the "),
            ("close ", "close the "),
        ];
        for (from, to) in rewrites {
            if let Some(rest) = line.strip_prefix(from) {
                return format!("{to}{rest}");
            }
        }
        if let Some(rest) = line.strip_prefix("put ") {
            if let Some((obj, dest)) = rest.split_once(" on ") {
                return format!("place the {obj} on the {dest}");
            }
            if let Some((obj, dest)) = rest.split_once(" in ") {
                return format!("put the {obj} into the {dest}");
            }
        }
        line.to_string()
    }

    fn token_probability(&self, token: &str, context: &[Arc<[f64]>]) -> f64 {
        let v = self.embedder.token_vector(token);
        let best = context
            .iter()
            .map(|c| c.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>())
            .fold(0.0_f64, f64::max);
        let related = if best < self.config.relevance_floor { 0.0 } else { best.min(1.0) };
        let alpha = self.config.context_weight;
        (1.0 - alpha) / self.config.vocab_size + alpha * related
    }
}

impl LanguageModel for StubBackend {
    fn id(&self) -> String {
        format!("stub:corpus={}", self.corpus.len())
    }

    fn sample_continuations(&self, request: &SampleRequest) -> Result<Vec<Sample>, LmError> {
        if request.prompt.trim().is_empty() {
            return Err(LmError::Precondition("empty prompt".into()));
        }
        let blocks = self.layout.parse(&request.prompt);
        let Some(query) = blocks.last() else {
            return Ok(vec![null_sample(-0.1); request.k]);
        };
        let example = (blocks.len() >= 2).then(|| blocks[blocks.len() - 2].steps.as_slice());
        let position = query.steps.len();
        let sources = self.sources(example, &query.task);
        let temperature = request.temperature.max(1e-3);
        let tempered: Vec<f64> = sources.iter().map(|s| s.0.powf(1.0 / temperature)).collect();
        let total: f64 = tempered.iter().sum();

        let mut rng = self.rng_for(&request.prompt, request.seed);
        let mut samples = Vec::with_capacity(request.k);
        for _ in 0..request.k {
            let noise: f64 = rng.gen();
            if sources.is_empty() || total <= 0.0 {
                samples.push(null_sample(-0.1 - 0.1 * noise));
                continue;
            }
            let mut pick: f64 = rng.gen::<f64>() * total;
            let mut index = sources.len() - 1;
            for (i, w) in tempered.iter().enumerate() {
                if pick < *w {
                    index = i;
                    break;
                }
                pick -= w;
            }
            let (_, steps, base) = &sources[index];
            let roll: f64 = rng.gen();
            let (text, logprob) = match steps.get(position) {
                None => (String::new(), -0.05 - 0.1 * noise),
                Some(_) if roll < self.config.noise_rate => {
                    let garbled = match steps.get(position + 1) {
                        Some(next) if rng.gen_bool(0.5) => next.clone(),
                        _ => CHATTER[rng.gen_range(0..CHATTER.len())].to_string(),
                    };
                    (garbled, base - 1.2 - 0.3 * noise)
                }
                Some(line) if roll < self.config.noise_rate + self.config.paraphrase_rate => {
                    (Self::paraphrase(line), base - 0.3 - 0.3 * noise)
                }
                Some(line) => (line.clone(), base - 0.3 * noise),
            };
            let text = text.split(request.stop.as_str()).next().unwrap_or("").trim().to_string();
            let token_count = words(&text).len() + 1;
            samples.push(Sample {
                text,
                mean_logprob: logprob.min(0.0),
                token_count,
            });
        }
        Ok(samples)
    }

    fn perplexity(&self, prompt: &str, continuation: &str) -> Result<f64, LmError> {
        let tokens = self.embedder.canonical_tokens(continuation);
        if tokens.is_empty() {
            return Err(LmError::Precondition("empty continuation".into()));
        }
        let context: Vec<Arc<[f64]>> = self
            .embedder
            .canonical_tokens(prompt)
            .iter()
            .map(|t| self.embedder.token_vector(t))
            .collect();
        let nll: f64 = tokens
            .iter()
            .map(|t| -self.token_probability(t, &context).ln())
            .sum::<f64>()
            / tokens.len() as f64;
        Ok(nll.exp().max(1.0))
    }

    fn embed(&self, text: &str) -> Result<Embedding, LmError> {
        Ok(self.embedder.embed_text(text))
    }
}

fn null_sample(logprob: f64) -> Sample {
    Sample {
        text: String::new(),
        mean_logprob: logprob,
        token_count: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(stub: &StubBackend, a: &str, b: &str) -> f64 {
        cosine(&stub.embed(a).unwrap(), &stub.embed(b).unwrap()).unwrap()
    }

    fn corpus() -> Vec<StubPlan> {
        vec![StubPlan {
            task: "watch tv".into(),
            steps: vec!["walk to living room".into(), "switch on tv".into()],
        }]
    }

    fn request(prompt: &str, k: usize, seed: u64) -> SampleRequest {
        SampleRequest {
            prompt: prompt.into(),
            k,
            stop: "\n".into(),
            temperature: 0.8,
            seed,
        }
    }

    #[test]
    fn embedder_calibration() {
        let stub = StubBackend::new(vec![]);
        assert_eq!(stub.embed("grab cup").unwrap(), stub.embed("grab cup").unwrap());
        assert!((cos(&stub, "grab cup", "grab cup") - 1.0).abs() < 1e-12);
        assert!(cos(&stub, "grab cup", "grab cup.") > cos(&stub, "grab cup", "switch off tv"));
        assert!(cos(&stub, "play video games", "use the computer") > cos(&stub, "play video games", "wash clothes"));
        assert!((cos(&stub, "turn on the television", "switch on tv") - 1.0).abs() < 1e-12);
        assert!(cos(&stub, "glass", "mug") > cos(&stub, "glass", "pillow"));
        assert!(stub.embed("walk").unwrap().norm() > 0.0);
        assert!(stub.embed(".").unwrap().norm() > 0.0);
    }

    #[test]
    fn perplexity_bounds() {
        let uniform = StubBackend::with_config(
            vec![],
            StubConfig {
                context_weight: 0.0,
                vocab_size: 50.0,
                ..StubConfig::default()
            },
        );
        let ppl = uniform.perplexity("desk, computer", ", keyboard").unwrap();
        assert!((ppl - 50.0).abs() < 1e-9);

        let certain = StubBackend::with_config(
            vec![],
            StubConfig {
                context_weight: 1.0,
                ..StubConfig::default()
            },
        );
        let ppl = certain.perplexity("desk, computer", ", computer").unwrap();
        assert!((ppl - 1.0).abs() < 1e-9);

        let stub = StubBackend::new(vec![]);
        let keyboard = stub.perplexity("desk, computer", ", keyboard").unwrap();
        let bathtub = stub.perplexity("desk, computer", ", bathtub").unwrap();
        assert!(keyboard < bathtub);
        assert!(keyboard >= 1.0);
        assert!(matches!(stub.perplexity("desk", ""), Err(LmError::Precondition(_))));
        assert!(matches!(stub.perplexity("desk", ", "), Err(LmError::Precondition(_))));
    }

    #[test]
    fn sampling_is_seeded() {
        let stub = StubBackend::new(corpus());
        let prompt = "Task: watch tv\nStep 1: walk to living room\nStep 2: switch on tv\n\nTask: watch television\nStep 1:";
        let a = stub.sample_continuations(&request(prompt, 5, 3)).unwrap();
        let b = stub.sample_continuations(&request(prompt, 5, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|s| s.mean_logprob <= 0.0 && s.mean_logprob.is_finite()));
        assert!(a.iter().any(|s| s.text.contains("living room")));
    }

    #[test]
    fn finished_prompt_yields_mostly_nulls() {
        let stub = StubBackend::new(corpus());
        let prompt = "Task: watch tv\nStep 1: walk to living room\nStep 2: switch on tv\n\nTask: watch television\nStep 1: walk to living room\nStep 2: switch on tv\nStep 3:";
        for seed in 0..20 {
            let samples = stub.sample_continuations(&request(prompt, 10, seed)).unwrap();
            let nulls = samples.iter().filter(|s| s.text.is_empty()).count();
            assert!(nulls > 5, "seed {seed}: {nulls} nulls");
        }
        assert!(stub.sample_continuations(&request("  ", 3, 0)).is_err());
    }

    #[test]
    fn paraphrases_parse() {
        let registry = crate::script::TemplateRegistry::builtin();
        for line in ["walk to kitchen counter", "switch on tv", "grab plate", "put plate on table", "put clothes in washing machine", "sit on sofa", "close fridge"] {
            let p = StubBackend::paraphrase(line);
            let (a, na) = crate::script::extract_objects(line, &registry).unwrap();
            let (b, nb) = crate::script::extract_objects(&p, &registry).unwrap();
            assert_eq!((a.verb.clone(), na), (b.verb.clone(), nb), "{p}");
        }
    }
}
