//! Action templates and the three step representations: free text, the
//! verb-plus-object-names form, and grounded script lines such as
//! `[PutBack] <glass> (2) <sink> (1)`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env_graph::NodeId;
use crate::executor::{Rule, Slot};

const BUILTIN_REGISTRY: &str = include_str!("../data/registry.json");

/// Words dropped from object spans when parsing free text.
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "some", "my", "your", "his", "her", "their", "its", "this", "that",
];

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("registry json (line {line}, column {column}): {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("template {index}: duplicate verb {verb}")]
    DuplicateVerb { index: usize, verb: String },
    #[error("template {verb}: pattern {pattern:?} has {found} slots, arity is {arity}")]
    SlotCount {
        verb: String,
        pattern: String,
        arity: usize,
        found: usize,
    },
    #[error("template {verb}: arity {arity} is outside 0..=2")]
    Arity { verb: String, arity: usize },
    #[error("template {verb}: rule {rule} references a slot beyond arity {arity}")]
    RuleSlot {
        verb: String,
        rule: String,
        arity: usize,
    },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("empty script line")]
    Empty,
    #[error("column {column}: expected {expected}")]
    Malformed { column: usize, expected: &'static str },
    #[error("column {column}: unknown verb {verb:?}")]
    UnknownVerb { column: usize, verb: String },
    #[error("column {column}: {verb} takes {expected} objects, found {found}")]
    ArityMismatch {
        column: usize,
        verb: String,
        expected: usize,
        found: usize,
    },
    #[error("column {column}: invalid object id {text:?}")]
    BadId { column: usize, text: String },
    #[error("no action pattern matches {0:?}")]
    Unparseable(String),
    #[error("step {0} is not grounded")]
    Ungrounded(String),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<ParseError>,
    },
    #[error("plan file: missing '# task:' header")]
    MissingHeader,
}

/// One admissible action: a verb, its NL rendering and its rule set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTemplate {
    pub verb: String,
    pub arity: usize,
    pub nl_pattern: String,
    /// Extra phrasings accepted by [`extract_objects`]; never rendered.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub preconditions: Vec<Rule>,
    #[serde(default)]
    pub effects: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq)]
enum PatternToken {
    Word(String),
    Slot(usize),
}

#[derive(Debug, Clone)]
struct CompiledPattern {
    template: usize,
    tokens: Vec<PatternToken>,
    literal_count: usize,
}

fn compile_pattern(pattern: &str) -> Vec<PatternToken> {
    pattern
        .split_whitespace()
        .map(|w| {
            let inner = w.strip_prefix('{').and_then(|r| r.strip_suffix('}'));
            match inner.and_then(|d| d.parse::<usize>().ok()) {
                Some(slot) => PatternToken::Slot(slot),
                None => PatternToken::Word(w.to_lowercase()),
            }
        })
        .collect()
}

fn slot_count(tokens: &[PatternToken]) -> usize {
    tokens
        .iter()
        .filter(|t| matches!(t, PatternToken::Slot(_)))
        .count()
}

/// The admissible-action corpus. Immutable once built.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: Vec<Arc<ActionTemplate>>,
    by_verb: HashMap<String, usize>,
    /// Longest pattern first, then registry order.
    patterns: Vec<CompiledPattern>,
}

impl TemplateRegistry {
    pub fn new(templates: Vec<ActionTemplate>) -> Result<Self, RegistryError> {
        let mut by_verb = HashMap::new();
        let mut patterns = Vec::new();
        for (index, t) in templates.iter().enumerate() {
            if t.arity > 2 {
                return Err(RegistryError::Arity {
                    verb: t.verb.clone(),
                    arity: t.arity,
                });
            }
            if by_verb.insert(t.verb.to_lowercase(), index).is_some() {
                return Err(RegistryError::DuplicateVerb {
                    index,
                    verb: t.verb.clone(),
                });
            }
            for pattern in std::iter::once(&t.nl_pattern).chain(t.aliases.iter()) {
                let tokens = compile_pattern(pattern);
                let found = slot_count(&tokens);
                let slots_ok = (0..t.arity).all(|s| tokens.contains(&PatternToken::Slot(s)));
                if found != t.arity || !slots_ok {
                    return Err(RegistryError::SlotCount {
                        verb: t.verb.clone(),
                        pattern: pattern.clone(),
                        arity: t.arity,
                        found,
                    });
                }
                patterns.push(CompiledPattern {
                    template: index,
                    literal_count: tokens.len() - found,
                    tokens,
                });
            }
            for rule in t.preconditions.iter().chain(t.effects.iter()) {
                let too_far = rule.slots().iter().any(|s| match s {
                    Slot::Obj0 => t.arity < 1,
                    Slot::Obj1 => t.arity < 2,
                    Slot::Agent | Slot::Any => false,
                });
                if too_far {
                    return Err(RegistryError::RuleSlot {
                        verb: t.verb.clone(),
                        rule: rule.to_string(),
                        arity: t.arity,
                    });
                }
            }
        }
        // stable sort keeps registry order among equal lengths
        patterns.sort_by_key(|p| std::cmp::Reverse(p.literal_count));
        Ok(TemplateRegistry {
            templates: templates.into_iter().map(Arc::new).collect(),
            by_verb,
            patterns,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let templates: Vec<ActionTemplate> =
            serde_json::from_str(text).map_err(|e| RegistryError::Json {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        Self::new(templates)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// The shipped registry of household actions.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_REGISTRY).expect("builtin registry is valid")
    }

    pub fn templates(&self) -> &[Arc<ActionTemplate>] {
        &self.templates
    }

    /// Case-insensitive verb lookup.
    pub fn get(&self, verb: &str) -> Option<&Arc<ActionTemplate>> {
        self.by_verb
            .get(&verb.to_lowercase())
            .map(|&i| &self.templates[i])
    }

    /// Every literal word used by any pattern.
    pub fn pattern_words(&self) -> Vec<String> {
        let mut words: Vec<String> = self
            .patterns
            .iter()
            .flat_map(|p| p.tokens.iter())
            .filter_map(|t| match t {
                PatternToken::Word(w) => Some(w.clone()),
                PatternToken::Slot(_) => None,
            })
            .collect();
        words.sort();
        words.dedup();
        words
    }
}

/// Lowercases an object name and joins its words with underscores.
pub fn normalize_name(name: &str) -> String {
    name.split(|c: char| c.is_whitespace() || c == '_')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Object name as it appears in natural-language text.
pub fn display_name(name: &str) -> String {
    name.replace('_', " ")
}

/// One action step. Grounded steps carry a node id per object.
#[derive(Debug, Clone)]
pub struct ActionStep {
    pub template: Arc<ActionTemplate>,
    pub object_names: Vec<String>,
    pub object_ids: Option<Vec<NodeId>>,
}

impl PartialEq for ActionStep {
    fn eq(&self, other: &Self) -> bool {
        self.template.verb == other.template.verb
            && self.object_names == other.object_names
            && self.object_ids == other.object_ids
    }
}

impl ActionStep {
    pub fn new(template: Arc<ActionTemplate>, names: Vec<String>) -> Self {
        ActionStep {
            template,
            object_names: names.iter().map(|n| normalize_name(n)).collect(),
            object_ids: None,
        }
    }

    pub fn grounded(template: Arc<ActionTemplate>, names: Vec<String>, ids: Vec<NodeId>) -> Self {
        ActionStep {
            object_ids: Some(ids),
            ..ActionStep::new(template, names)
        }
    }

    pub fn verb(&self) -> &str {
        &self.template.verb
    }

    pub fn is_grounded(&self) -> bool {
        self.object_ids
            .as_ref()
            .is_some_and(|ids| ids.len() == self.template.arity)
    }

    /// Identity of the step ignoring grounding: verb and object names.
    pub fn key(&self) -> (String, Vec<String>) {
        (self.template.verb.clone(), self.object_names.clone())
    }
}

impl fmt::Display for ActionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.template.verb)?;
        for (i, name) in self.object_names.iter().enumerate() {
            write!(f, " <{name}>")?;
            if let Some(id) = self.object_ids.as_ref().and_then(|ids| ids.get(i)) {
                write!(f, " ({id})")?;
            }
        }
        Ok(())
    }
}

/// An ordered action plan for one task. May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub task: String,
    pub steps: Vec<ActionStep>,
}

impl Plan {
    pub fn new(task: &str) -> Self {
        Plan {
            task: task.to_string(),
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Plan file text: a `# task:` header, then one script line per step.
    pub fn to_file_string(&self) -> Result<String, ParseError> {
        let mut out = format!("# task: {}\n", self.task);
        for step in &self.steps {
            out.push_str(&render_script_line(step)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_file(text: &str, registry: &TemplateRegistry) -> Result<Plan, ParseError> {
        let mut task = None;
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                if let Some(t) = rest.trim().strip_prefix("task:") {
                    task = Some(t.trim().to_string());
                }
                continue;
            }
            let step = parse_script_line(trimmed, registry).map_err(|e| ParseError::AtLine {
                line: i + 1,
                source: Box::new(e),
            })?;
            steps.push(step);
        }
        Ok(Plan {
            task: task.ok_or(ParseError::MissingHeader)?,
            steps,
        })
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.text[self.pos..].chars().next().unwrap().len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    /// Reads a `open ... close` delimited span, returning its trimmed content.
    fn delimited(&mut self, open: char, close: char, expected: &'static str) -> Result<&'a str, ParseError> {
        self.skip_ws();
        if self.peek() != Some(open) {
            return Err(ParseError::Malformed {
                column: self.column(),
                expected,
            });
        }
        let start = self.pos + open.len_utf8();
        match self.text[start..].find(close) {
            Some(off) if !self.text[start..start + off].contains(open) => {
                self.pos = start + off + close.len_utf8();
                Ok(self.text[start..start + off].trim())
            }
            _ => Err(ParseError::Malformed {
                column: self.column(),
                expected,
            }),
        }
    }
}

/// Parses `[Verb] <name> (id) ...`. Ids are optional but all-or-nothing.
pub fn parse_script_line(line: &str, registry: &TemplateRegistry) -> Result<ActionStep, ParseError> {
    let line = line.trim();
    if line.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut cur = Cursor { text: line, pos: 0 };
    let verb_column = cur.column() + 1;
    let verb = cur.delimited('[', ']', "'[Verb]'")?;
    let template = registry.get(verb).ok_or_else(|| ParseError::UnknownVerb {
        column: verb_column,
        verb: verb.to_string(),
    })?;

    let mut names = Vec::new();
    let mut ids = Vec::new();
    loop {
        cur.skip_ws();
        match cur.peek() {
            None => break,
            Some('<') => {
                let name = cur.delimited('<', '>', "'<object>'")?;
                if name.is_empty() {
                    return Err(ParseError::Malformed {
                        column: cur.column(),
                        expected: "nonempty object name",
                    });
                }
                names.push(normalize_name(name));
                cur.skip_ws();
                if cur.peek() == Some('(') {
                    let column = cur.column();
                    let raw = cur.delimited('(', ')', "'(id)'")?;
                    let id = raw.parse::<u32>().map_err(|_| ParseError::BadId {
                        column,
                        text: raw.to_string(),
                    })?;
                    ids.push(NodeId(id));
                }
            }
            Some(_) => {
                return Err(ParseError::Malformed {
                    column: cur.column(),
                    expected: "'<object>' or end of line",
                })
            }
        }
    }
    if names.len() != template.arity {
        return Err(ParseError::ArityMismatch {
            column: verb_column,
            verb: template.verb.clone(),
            expected: template.arity,
            found: names.len(),
        });
    }
    let object_ids = match ids.len() {
        0 if template.arity > 0 => None,
        n if n == names.len() => Some(ids),
        _ => {
            return Err(ParseError::Malformed {
                column: cur.column(),
                expected: "an id for every object or for none",
            })
        }
    };
    Ok(ActionStep {
        template: template.clone(),
        object_names: names,
        object_ids,
    })
}

/// Renders a grounded step in the agent script schema.
pub fn render_script_line(step: &ActionStep) -> Result<String, ParseError> {
    if !step.is_grounded() {
        return Err(ParseError::Ungrounded(step.to_string()));
    }
    Ok(step.to_string())
}

/// Fills a pattern's slots with display names.
pub fn fill_pattern(pattern: &str, names: &[String]) -> String {
    compile_pattern(pattern)
        .iter()
        .map(|t| match t {
            PatternToken::Word(w) => w.clone(),
            PatternToken::Slot(i) => names
                .get(*i)
                .map(|n| display_name(n))
                .unwrap_or_default(),
        })
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Natural-language rendering, e.g. "put cup on table".
pub fn render_nl(step: &ActionStep) -> String {
    fill_pattern(&step.template.nl_pattern, &step.object_names)
}

/// Splits free text into lowercase words, keeping underscores and hyphens.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-' || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn match_tokens(tokens: &[PatternToken], words: &[String], slots: &mut Vec<Option<Vec<String>>>) -> bool {
    match tokens.split_first() {
        None => words.is_empty(),
        Some((PatternToken::Word(w), rest)) => {
            words.first() == Some(w) && match_tokens(rest, &words[1..], slots)
        }
        Some((PatternToken::Slot(i), rest)) => {
            // shortest span first so literals bind at their first occurrence
            for end in 1..=words.len() {
                let span: Vec<String> = words[..end]
                    .iter()
                    .filter(|w| !DETERMINERS.contains(&w.as_str()))
                    .cloned()
                    .collect();
                if span.is_empty() {
                    continue;
                }
                let saved = slots[*i].replace(span);
                if match_tokens(rest, &words[end..], slots) {
                    return true;
                }
                slots[*i] = saved;
            }
            false
        }
    }
}

/// Matches free text against the pattern skeletons, longest first.
pub fn extract_objects(
    nl_step: &str,
    registry: &TemplateRegistry,
) -> Result<(Arc<ActionTemplate>, Vec<String>), ParseError> {
    let ws = words(nl_step);
    if !ws.is_empty() {
        for pattern in &registry.patterns {
            let template = &registry.templates[pattern.template];
            let mut slots = vec![None; template.arity];
            if match_tokens(&pattern.tokens, &ws, &mut slots) {
                let names = slots
                    .into_iter()
                    .map(|s| s.map(|span| span.join("_")).unwrap_or_default())
                    .collect();
                return Ok((template.clone(), names));
            }
        }
    }
    Err(ParseError::Unparseable(nl_step.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg() -> TemplateRegistry {
        TemplateRegistry::builtin()
    }

    #[test]
    fn builtin_has_the_household_verbs() {
        let r = reg();
        assert_eq!(r.templates().len(), 20);
        for verb in [
            "Walk", "Run", "Find", "Grab", "PutBack", "PutIn", "Open", "Close", "SwitchOn",
            "SwitchOff", "Sit", "StandUp", "TurnTo", "LookAt", "Touch", "Drink", "Wipe",
            "TypeOn", "Push", "Pull",
        ] {
            assert!(r.get(verb).is_some(), "{verb}");
        }
    }

    #[test]
    fn parse_script_lines() {
        let r = reg();
        let step = parse_script_line("[PutBack] <glass> (2) <sink> (1)", &r).unwrap();
        assert_eq!(step.verb(), "PutBack");
        assert_eq!(step.object_names, vec!["glass", "sink"]);
        assert_eq!(step.object_ids, Some(vec![NodeId(2), NodeId(1)]));

        let walk = parse_script_line("[walk] <kitchen> (11)", &r).unwrap();
        assert_eq!(walk.verb(), "Walk");
        assert_eq!(walk.object_ids, Some(vec![NodeId(11)]));

        let stand = parse_script_line("[StandUp]", &r).unwrap();
        assert!(stand.is_grounded());

        assert_eq!(
            parse_script_line("[Fly] <moon> (1)", &r),
            Err(ParseError::UnknownVerb {
                column: 2,
                verb: "Fly".into()
            })
        );
        assert!(matches!(
            parse_script_line("[Grab] <cup> (1) <plate> (2)", &r),
            Err(ParseError::ArityMismatch { expected: 1, found: 2, .. })
        ));
        assert!(matches!(
            parse_script_line("[Grab <cup> (1)", &r),
            Err(ParseError::Malformed { .. })
        ));
        assert!(matches!(
            parse_script_line("[Grab] <cup (1)", &r),
            Err(ParseError::Malformed { .. })
        ));
        assert!(matches!(
            parse_script_line("[Grab] <cup> (x)", &r),
            Err(ParseError::BadId { column: 14, .. })
        ));
        assert!(matches!(
            parse_script_line("[PutBack] <cup> (1) <table>", &r),
            Err(ParseError::Malformed { .. })
        ));
        assert_eq!(parse_script_line("   ", &r), Err(ParseError::Empty));
    }

    #[test]
    fn render_lines() {
        let r = reg();
        let step = ActionStep::grounded(
            r.get("PutBack").unwrap().clone(),
            vec!["glass".into(), "sink".into()],
            vec![NodeId(2), NodeId(1)],
        );
        assert_eq!(
            render_script_line(&step).unwrap(),
            "[PutBack] <glass> (2) <sink> (1)"
        );
        let loose = ActionStep::new(r.get("Grab").unwrap().clone(), vec!["cup".into()]);
        assert!(matches!(render_script_line(&loose), Err(ParseError::Ungrounded(_))));
    }

    #[test]
    fn nl_rendering() {
        let r = reg();
        let put = ActionStep::new(r.get("PutBack").unwrap().clone(), vec!["cup".into(), "table".into()]);
        assert_eq!(render_nl(&put), "put cup on table");
        let walk = ActionStep::new(r.get("Walk").unwrap().clone(), vec!["bedroom".into()]);
        assert_eq!(render_nl(&walk), "walk to bedroom");
        let stand = ActionStep::new(r.get("StandUp").unwrap().clone(), vec![]);
        assert_eq!(render_nl(&stand), r.get("StandUp").unwrap().nl_pattern);
        let counter = ActionStep::new(r.get("Walk").unwrap().clone(), vec!["Kitchen Counter".into()]);
        assert_eq!(counter.object_names, vec!["kitchen_counter"]);
        assert_eq!(render_nl(&counter), "walk to kitchen counter");
    }

    #[test]
    fn extraction() {
        let r = reg();
        let (t, names) = extract_objects("put cup on table", &r).unwrap();
        assert_eq!((t.verb.as_str(), names), ("PutBack", vec!["cup".to_string(), "table".to_string()]));
        let (t, names) = extract_objects("walk to kitchen", &r).unwrap();
        assert_eq!((t.verb.as_str(), names), ("Walk", vec!["kitchen".to_string()]));
        let (t, names) = extract_objects("Turn on the television.", &r).unwrap();
        assert_eq!((t.verb.as_str(), names), ("SwitchOn", vec!["television".to_string()]));
        let (t, names) = extract_objects("put the dirty clothes in the washing machine", &r).unwrap();
        assert_eq!(t.verb, "PutIn");
        assert_eq!(names, vec!["dirty_clothes", "washing_machine"]);
        assert!(matches!(
            extract_objects("hello world", &r),
            Err(ParseError::Unparseable(_))
        ));
        assert!(extract_objects("", &r).is_err());
        assert!(extract_objects("walk to the", &r).is_err());
    }

    #[test]
    fn plan_files() {
        let r = reg();
        let text = "# task: wash dishes\n[Walk] <sink> (3)\n[SwitchOn] <faucet> (4)\n";
        let plan = Plan::parse_file(text, &r).unwrap();
        assert_eq!(plan.task, "wash dishes");
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.to_file_string().unwrap(), text);
        let err = Plan::parse_file("# task: x\n[Walk] <sink> (3)\n[Jump]\n", &r).unwrap_err();
        assert!(matches!(err, ParseError::AtLine { line: 3, .. }));
        assert_eq!(Plan::parse_file("[Walk] <sink> (3)", &r), Err(ParseError::MissingHeader));
    }

    #[test]
    fn registry_validation() {
        let bad = r#"[{"verb":"Walk","arity":1,"nl_pattern":"walk to {0} and {1}"}]"#;
        assert!(matches!(
            TemplateRegistry::from_json(bad),
            Err(RegistryError::SlotCount { found: 2, .. })
        ));
        let dup = r#"[{"verb":"Walk","arity":1,"nl_pattern":"walk to {0}"},{"verb":"walk","arity":1,"nl_pattern":"go {0}"}]"#;
        assert!(matches!(
            TemplateRegistry::from_json(dup),
            Err(RegistryError::DuplicateVerb { index: 1, .. })
        ));
        let slot = r#"[{"verb":"Walk","arity":0,"nl_pattern":"walk","effects":[{"kind":"move_agent","target":"OBJ0"}]}]"#;
        assert!(matches!(
            TemplateRegistry::from_json(slot),
            Err(RegistryError::RuleSlot { .. })
        ));
    }

    fn arb_name(keywords: Vec<String>) -> impl Strategy<Value = String> {
        "[a-z]{2,7}( [a-z]{2,7})?"
            .prop_filter("no pattern keywords", move |s| {
                s.split(' ')
                    .all(|w| !keywords.contains(&w.to_string()) && !DETERMINERS.contains(&w))
            })
            .prop_map(|s| normalize_name(&s))
    }

    proptest! {
        #[test]
        fn script_round_trip(t in 0usize..20, a in "[a-z_]{1,10}", b in "[a-z_]{1,10}", ia in 1u32..500, ib in 1u32..500) {
            let r = reg();
            let template = r.templates()[t].clone();
            let names: Vec<String> = vec![a, b].into_iter().take(template.arity)
                .map(|n| normalize_name(&n)).filter(|n| !n.is_empty()).collect();
            prop_assume!(names.len() == template.arity);
            let ids = vec![NodeId(ia), NodeId(ib)].into_iter().take(template.arity).collect();
            let step = ActionStep::grounded(template, names, ids);
            let line = render_script_line(&step).unwrap();
            prop_assert_eq!(parse_script_line(&line, &r).unwrap(), step);
        }

        #[test]
        fn nl_round_trip(t in 0usize..20, a in arb_name(reg().pattern_words()), b in arb_name(reg().pattern_words())) {
            let r = reg();
            let template = r.templates()[t].clone();
            let names: Vec<String> = vec![a, b].into_iter().take(template.arity).collect();
            let step = ActionStep::new(template.clone(), names.clone());
            let (found, got) = extract_objects(&render_nl(&step), &r).unwrap();
            prop_assert_eq!(&found.verb, &template.verb);
            prop_assert_eq!(got, names);
        }

        #[test]
        fn parsing_is_total(line in "\\PC{0,40}") {
            let r = reg();
            let _ = parse_script_line(&line, &r);
            let _ = extract_objects(&line, &r);
        }
    }
}
