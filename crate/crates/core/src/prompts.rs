//! Prompt templates for turning a failed proof, its verifier feedback, and
//! a repaired proof into reflection or rewriting requests for an external
//! model. Only rendering lives here; no model is called.

const REFLECTION: &str = "# Initial Proof
```lean4
{old_code}
```

# Lean Feedback
{error}

# Correct Proof
```lean4
{new_code}
```

Your task is to generate a reflection of a Lean4 proof as follows:
1. You are provided with a lean proof code that failed to complete the proof, the verify feedback, and a revised correct proof.
2. You need to act as a verifier to check the code step by step and point out where the code fails with incorrect tactics.
3. Provide an alternative method, such as those in the correct proof.
4. Act as you are verifying your own proof.

Here are some rules you need to follow:
1. At the beginning, you should start with a conjunction phrase such as 'let's verify' and claim you need to verify the proof.
2. Instead of directly pointing out the issue, your answer should show the process to identify the incorrect step.
3. Do not refer to Lean Feedback, Correct Proof, or anything that shows you have already known the issue before your reflection.
4. Do not provide any new Lean4 code block, you don't need to write a correct proof.
5. Do not include a summary section.
6. Again, do not refer to Lean Feedback, Correct Proof, do not write anything like 'as shown in the correct proof'.

Now, start with a conjunction phrase and require you need to check the proof, do not directly claim there is an issue.
";

const REWRITE_STEP1: &str = "You are an experienced mathematics evaluation teacher. You will be provided with a math problem and the corresponding solution idea.
Please determine whether the solution idea is correct. If it is, please output \"Correct\", otherwise please output \"Incorrect\". If the solution idea is incorrect, please provide the correct solution idea, and the output of the solution idea should be included within ``` and ```.

The output format is as follows:

1. Judgement: Incorrect. Solution: ```Solution idea```
2. Judgement: Correct.

[math problem start]
{problem}
[math problem end]

[solution idea start]
{solution}
[solution idea end]
";

const REWRITE_STEP2: &str = "# Wrong code
```lean4
{lean code1}
```

# Correct code
```lean4
{lean code2}
```

I have given you with two Lean4 code solutions to the same problem. The first solution fails to compile in Lean4, while the second solution compiles successfully.

Your task is to:

1. Act as a verification assistant and carefully compare these two code snippets.
2. Identify the specific errors or flawed strategies in the first solution that caused compilation failure.
3. Explain the reasoning process that would lead someone from the incorrect approach to the correct solution.

When analyzing the code, please simulate the thought process of someone examining their own proof. Begin sections of your analysis with phrases like \"Let's verify my proof...\", \"Wait, I see an issue here...\", or \"Let me reconsider this approach...\" This should demonstrate how someone might catch and correct their own mistakes.

The analysis emphasizes conceptual understanding over syntax details, explaining the fundamental logical or strategic errors in the initial solution and demonstrating how the corrected solution properly addresses these conceptual problems.

Please structure your response with:
- Identification of specific errors in the first solution.
- Explanation of the conceptual issues that led to these errors.
- How to fix the conceptual problems in error so as to generate the problem-solving idea of the second solution?

Do not provide any new Lean4 code beyond what I've given you - focus exclusively on analyzing the provided code. Don't include the phased titles in the output results, such as \"Identification of Specific Errors in the First Solution\", \"Conceptual Issues That Led to These Errors\", etc. Also, don't use expressions like \"the first solution\" or \"the second solution\". Use \"current solution\" to represent \"first solution\". Although you used the second solution for auxiliary analysis, avoid revealing in your response that you\u{2019}ve seen its content. For example, refrain from saying things like \u{2018}I noticed that in the new solution.\u{2019} Instead, respond as if you\u{2019}re thinking independently, based solely on the first solution.
";

/// Single-pass placeholder substitution: inserted values are never
/// rescanned, so field text containing `{...}` is emitted verbatim.
fn fill(template: &str, fields: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + fields.iter().map(|f| f.1.len()).sum::<usize>());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (key, value) in fields {
            let slot = format!("{{{key}}}");
            if tail.starts_with(&slot) {
                out.push_str(value);
                rest = &tail[slot.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Reflection request built from the failing script, the verifier's error
/// text, and the repaired script.
pub fn render_reflection_prompt(old_code: &str, error_text: &str, new_code: &str) -> String {
    fill(REFLECTION, &[("old_code", old_code), ("error", error_text), ("new_code", new_code)])
}

/// The two rewriting requests: judging a solution idea, then explaining
/// the move from the wrong code to the right code.
pub fn render_rewrite_prompts(problem: &str, solution: &str, code_wrong: &str, code_right: &str) -> (String, String) {
    (
        fill(REWRITE_STEP1, &[("problem", problem), ("solution", solution)]),
        fill(REWRITE_STEP2, &[("lean code1", code_wrong), ("lean code2", code_right)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_sections_in_order() {
        let p = render_reflection_prompt("rw add_comm at .", "error: RuleMismatch", "rw add_zero at .");
        let a = p.find("# Initial Proof").unwrap();
        let b = p.find("# Lean Feedback").unwrap();
        let c = p.find("# Correct Proof").unwrap();
        assert!(a < b && b < c);
        assert!(p.contains("```lean4\nrw add_comm at .\n```"));
        assert!(p.contains("# Lean Feedback\nerror: RuleMismatch\n"));
        assert_eq!(p, render_reflection_prompt("rw add_comm at .", "error: RuleMismatch", "rw add_zero at ."));
    }

    #[test]
    fn empty_feedback_body() {
        let p = render_reflection_prompt("x", "", "y");
        assert!(p.contains("# Lean Feedback\n\n\n# Correct Proof"));
    }

    #[test]
    fn rewrite_delimiters_in_order() {
        let (one, two) = render_rewrite_prompts("P", "S", "W", "R");
        let idx: Vec<usize> = ["[math problem start]\nP\n[math problem end]", "[solution idea start]\nS\n[solution idea end]"]
            .iter()
            .map(|m| one.find(m).unwrap())
            .collect();
        assert!(idx[0] < idx[1]);
        let w = two.find("# Wrong code\n```lean4\nW\n```").unwrap();
        let r = two.find("# Correct code\n```lean4\nR\n```").unwrap();
        assert!(w < r);
    }

    #[test]
    fn values_are_not_rescanned() {
        let p = render_reflection_prompt("{error}", "E", "{new_code}");
        assert!(p.contains("```lean4\n{error}\n```"));
        assert!(p.contains("```lean4\n{new_code}\n```"));
    }
}
