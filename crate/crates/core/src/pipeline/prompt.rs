use crate::dataset::Sample;

/// Instruction placed before the conversation transcript.
pub const SUMMARY_PROMPT: &str = "Below is a conversation between Joe and Jill, about an image. Use this conversation to generate a description of the image, such that it can be given as input to a text-to-image model as a prompt.";

/// The prompt for hops `1..=k`, or `None` if `k` is out of range.
pub fn build_prompt(sample: &Sample, k: usize) -> Option<String> {
    if k == 0 || k > sample.hops.len() {
        return None;
    }
    let mut out = String::from(SUMMARY_PROMPT);
    out.push('\n');
    for hop in &sample.hops[..k] {
        out.push_str(&format!("\nJoe: {}\nJill: {}", hop.joe_message, hop.jill_message));
    }
    Some(out)
}
