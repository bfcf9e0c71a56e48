//! Prompt assembly for the generative optimizer and the memory-only
//! baseline.
//!
//! The system prompt is the representation prompt concatenated with the
//! output-format prompt; the user prompt wraps the rendered problem report
//! between fence lines and, when a memory is present, appends past
//! variable/feedback pairs. All templates are fixed strings so assembled
//! prompts are byte-stable (golden files live in tests/goldens).

use opto_core::Value;

use crate::memory::{Memory, MemoryEntry};

pub const DEFAULT_INSTRUCTION: &str = "You need to change the <value> of the variables in #Variables to improve the output in accordance to #Feedback.";

/// The memory-only baseline sees no report, so its instruction carries no
/// section references.
pub const OPRO_INSTRUCTION: &str = "You need to change the values of the variables to improve the output in accordance to the feedback.";

pub const REPRESENTATION_PROMPT: &str = r#"You're tasked to solve a coding/algorithm problem. You will see the instruction, the code, the documentation of each function used in the code, and the feedback about the execution result.

Specifically, a problem will be composed of the following parts:
- #Instruction: the instruction which describes the things you need to do or the question you should answer.
- #Code: the code defined in the problem.
- #Documentation: the documentation of each function used in #Code. The explanation might be incomplete and just contain high-level description. You can use the values in #Others to help infer how those functions work.
- #Variables: the input variables that you can change.
- #Constraints: the constraints or descriptions of the variables in #Variables.
- #Inputs: the values of other inputs to the code, which are not changeable.
- #Others: the intermediate values created through the code execution.
- #Outputs: the result of the code output.
- #Feedback: the feedback about the code's execution result.

In #Variables, #Inputs, #Outputs, and #Others, the format is:

<data_type> <variable_name> = <value>

If <type> is (code), it means <value> is the source code of a python code, which may include docstring and definitions."#;

pub const OUTPUT_FORMAT_PROMPT: &str = r#"Output_format: Your output should be in the following json format, satisfying the json syntax:

{
"reasoning": <Your reasoning>,
"answer": <Your answer>,
"suggestion": {
    <variable_1>: <suggested_value_1>,
    <variable_2>: <suggested_value_2>,
    }
}

In "reasoning", explain the problem: 1. what the #Instruction means 2. what the #Feedback on #Output means to #Variables considering how #Variables are used in #Code and other values in #Documentation, #Inputs, #Others. 3. Reasoning about the suggested changes in #Variables (if needed) and the expected result.

If #Instruction asks for an answer, write it down in "answer".

If you need to suggest a change in the values of #Variables, write down the suggested values in "suggestion". Remember you can change only the values in #Variables, not others. When <type> of a variable is (code), you should write the new definition in the format of python code without syntax errors, and you should not change the function name or the function signature.

If no changes or answer are needed, just output TERMINATE."#;

pub const REPORT_FENCE: &str = "================================";

/// Representation prompt followed by the output-format prompt.
pub fn system_prompt() -> String {
    format!("{REPRESENTATION_PROMPT}\n\n{OUTPUT_FORMAT_PROMPT}")
}

fn render_memory_value(value: &Value) -> String {
    match value {
        // Code entries keep their raw multi-line source.
        Value::Code(src) => src.clone(),
        other => other.render_inline(),
    }
}

/// One past variables/feedback pair, as shown to the optimizer.
pub fn render_memory_entry(entry: &MemoryEntry) -> String {
    let mut out = String::from("{\n    \"variables\": {\n");
    for (name, value) in &entry.variables {
        out.push_str(&format!("        {}: {}\n", name, render_memory_value(value)));
    }
    out.push_str("    },\n");
    out.push_str(&format!("    \"feedback\": {}\n", entry.feedback));
    out.push('}');
    out
}

/// Builds the (system, user) prompt pair for one optimization step.
pub fn build_prompts(report: &str, memory: Option<&Memory>) -> (String, String) {
    let mut user = format!(
        "Now you see problem instance:\n\n{REPORT_FENCE}\n{report}\n{REPORT_FENCE}\n"
    );
    if let Some(memory) = memory {
        if !memory.is_empty() {
            user.push_str(
                "\nBelow are some variables and their feedbacks you received in the past.\n",
            );
            for entry in memory.entries() {
                user.push('\n');
                user.push_str(&render_memory_entry(entry));
                user.push('\n');
            }
        }
    }
    user.push_str("\nYour response:\n");
    (system_prompt(), user)
}

/// The memory-only baseline prompt: instruction plus past pairs, no trace,
/// no report sections; a single candidate is requested per call.
pub fn opro_build_prompt(memory: &Memory, instruction: &str) -> String {
    let mut out = String::from(instruction);
    out.push_str(
        "\n\nBelow are the variables you have tried and the feedback you received, in order.\n",
    );
    for entry in memory.entries() {
        out.push('\n');
        out.push_str(&render_memory_entry(entry));
        out.push('\n');
    }
    out.push_str(
        "\nPropose one new candidate assignment of the variables, in json format with a single \"suggestion\" object, or output TERMINATE if the feedback indicates success.\n",
    );
    out
}

/// Whitespace-token count, the proxy used for prompt-size comparisons.
pub fn token_estimate(text: &str) -> usize {
    text.split_whitespace().count()
}
