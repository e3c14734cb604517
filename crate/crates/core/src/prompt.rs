//! Text layout of few-shot planning prompts.
//!
//! A prompt is a sequence of blocks, each a task line followed by numbered
//! step lines. The final block is the query being planned; sampling cues the
//! model with the next step number.

use serde::{Deserialize, Serialize};

const BUILTIN_LAYOUT: &str = include_str!("../data/prompt_layout.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub task_prefix: String,
    pub step_prefix: String,
    pub block_separator: String,
}

impl Default for PromptLayout {
    fn default() -> Self {
        serde_json::from_str(BUILTIN_LAYOUT).expect("builtin prompt layout is valid")
    }
}

/// One task with the steps written under it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptBlock {
    pub task: String,
    pub steps: Vec<String>,
}

impl PromptLayout {
    pub fn task_line(&self, task: &str) -> String {
        format!("{} {}\n", self.task_prefix, task.trim())
    }

    pub fn step_line(&self, number: usize, text: &str) -> String {
        format!("{} {}: {}\n", self.step_prefix, number, text.trim())
    }

    /// The dangling "Step n:" that asks for step `number`.
    pub fn step_cue(&self, number: usize) -> String {
        format!("{} {}:", self.step_prefix, number)
    }

    /// Splits a prompt back into blocks. Lines that are neither task nor
    /// step lines are ignored, as is a trailing empty step cue.
    pub fn parse(&self, prompt: &str) -> Vec<PromptBlock> {
        let mut blocks: Vec<PromptBlock> = Vec::new();
        for line in prompt.lines().map(str::trim) {
            if let Some(task) = line.strip_prefix(&self.task_prefix) {
                blocks.push(PromptBlock {
                    task: task.trim().to_string(),
                    steps: Vec::new(),
                });
            } else if let Some(rest) = line.strip_prefix(&self.step_prefix) {
                let Some((number, text)) = rest.split_once(':') else {
                    continue;
                };
                if number.trim().parse::<usize>().is_err() || text.trim().is_empty() {
                    continue;
                }
                if let Some(block) = blocks.last_mut() {
                    block.steps.push(text.trim().to_string());
                }
            }
        }
        blocks
    }

    /// Drops a leading "Step n:" that a model may echo back.
    pub fn strip_step_label<'a>(&self, text: &'a str) -> &'a str {
        let t = text.trim();
        if let Some(rest) = t.strip_prefix(&self.step_prefix) {
            if let Some((number, body)) = rest.split_once(':') {
                if number.trim().parse::<usize>().is_ok() {
                    return body.trim();
                }
            }
        }
        t
    }
}
