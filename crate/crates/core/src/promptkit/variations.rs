use super::{PromptError, PromptSpec};

/// Tag of the reordered class list (A, H, N, S becomes H, N, A, S).
pub const HNAS_ORDER_TAG: &str = "order:hnas";

/// Moves the first class to third position: `[a, b, c, ...rest]` becomes
/// `[b, c, a, ...rest]`.
fn reorder(classes: &[String]) -> Vec<String> {
    let mut out = classes.to_vec();
    out[..3].rotate_left(1);
    out
}

fn derive(base: &PromptSpec, tag: String) -> PromptSpec {
    let mut v = base.clone();
    v.id = format!("{}~{}", base.id, tag);
    v.variation = Some(tag);
    v
}

/// Single-hop variations of `base`: the verb swap and the reordered class
/// list, plus every non-identity rotation of the class order when
/// `rotations` is set. Orders identical to one already emitted are skipped.
pub fn variations(base: &PromptSpec, rotations: bool) -> Result<Vec<PromptSpec>, PromptError> {
    if base.variation.is_some() {
        return Err(PromptError::NestedVariation(base.id.clone()));
    }
    base.validate()?;
    let mut out = Vec::new();

    let swapped = base.verb.swapped();
    let mut verb = derive(base, format!("verb:{}", swapped.word().to_lowercase()));
    verb.verb = swapped;
    out.push(verb);

    let mut seen = vec![base.class_order.clone()];
    if base.class_order.len() >= 3 {
        let order = reorder(&base.class_order);
        let mut v = derive(base, HNAS_ORDER_TAG.to_string());
        v.class_order = order.clone();
        seen.push(order);
        out.push(v);
    }
    if rotations {
        for k in 1..base.class_order.len() {
            let mut order = base.class_order.clone();
            order.rotate_left(k);
            if seen.contains(&order) {
                continue;
            }
            let mut v = derive(base, format!("order:rot{k}"));
            v.class_order = order.clone();
            seen.push(order);
            out.push(v);
        }
    }
    Ok(out)
}

/// Class order as upper-case initials, e.g. `H, N, A, S`.
pub fn describe_order(classes: &[String]) -> String {
    classes
        .iter()
        .map(|c| c.chars().next().map(|ch| ch.to_ascii_uppercase()).unwrap_or('?').to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
