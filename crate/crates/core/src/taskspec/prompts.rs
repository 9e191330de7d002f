//! Instruction-generation prompt templates.

use std::collections::BTreeMap;

pub const LAZY_TEMPLATE: &str = "Please convert the following instruction to be less specific. Do not change the behavior of the task, but give a short, less descriptive version of the task in human-like prose. Your final instruction should be a partial sentence and should not instruct to run any tests. It should just describe the changes to the repository. Do not output ANYTHING ELSE BUT THE NEW INSTRUCTION. Here is the original instruction:

{base_instruction}

Here are examples of lazy instructions: 

{few_shot_lazy}

Remember to only output the NEW LAZY INSTRUCTION CORRESPONDING TO THE BASE TASK.
";

pub const DESCRIPTIVE_TEMPLATE: &str = "Please convert the following instruction to be more specific and have specific filenames for edits (not paths). Do not change the behavior of the task, but give a longer, more descriptive version of the task in human-like specifications. Reason over the AST tests provided to give more information on which files could be relevant, but do not give exact implementation details or anything related to what generalizations the tests are looking for. Your final instruction should be around 2-3 full sentences and should not say to run any tests or anything like that. It should just describe the changes to the repository. Do not output ANYTHING ELSE BUT THE NEW INSTRUCTION. Here is the original instruction and its related test file:

{base_instruction}

Test File Starts Here: 

{inst_test_file}

End of Test File.

Here are examples of descriptive instructions: 

{few_shot_desc}

Remember to only output the NEW DESCRIPTIVE INSTRUCTION CORRESPONDING TO THE BASE TASK.
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstructionKind {
    Lazy,
    Descriptive,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no value for placeholder {{{name}}}")]
pub struct MissingPlaceholder {
    pub name: String,
}

/// Placeholder names (`{name}`, identifier characters only) in template order.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if close > 0 && after[..close].bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

/// Single-pass substitution: inserted values are never rescanned.
pub fn fill_template(template: &str, values: &BTreeMap<&str, &str>) -> Result<String, MissingPlaceholder> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if close > 0 && after[..close].bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') => {
                let name = &after[..close];
                let value = values.get(name).ok_or_else(|| MissingPlaceholder { name: name.to_string() })?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Render the lazy or descriptive generation prompt. Few-shot examples are joined by blank lines.
/// The descriptive prompt embeds the task's test text and needs `suite_text`.
pub fn render_instruction_prompt(
    kind: InstructionKind,
    base_instruction: &str,
    few_shots: &[&str],
    suite_text: Option<&str>,
) -> Result<String, MissingPlaceholder> {
    let missing = |name: &str| MissingPlaceholder { name: name.to_string() };
    if base_instruction.trim().is_empty() {
        return Err(missing("base_instruction"));
    }
    let shots = few_shots.join("\n\n");
    let mut values = BTreeMap::new();
    values.insert("base_instruction", base_instruction);
    let template = match kind {
        InstructionKind::Lazy => {
            if few_shots.is_empty() {
                return Err(missing("few_shot_lazy"));
            }
            values.insert("few_shot_lazy", shots.as_str());
            LAZY_TEMPLATE
        }
        InstructionKind::Descriptive => {
            if few_shots.is_empty() {
                return Err(missing("few_shot_desc"));
            }
            values.insert("few_shot_desc", shots.as_str());
            match suite_text {
                Some(t) if !t.trim().is_empty() => values.insert("inst_test_file", t),
                _ => return Err(missing("inst_test_file")),
            };
            DESCRIPTIVE_TEMPLATE
        }
    };
    fill_template(template, &values)
}
