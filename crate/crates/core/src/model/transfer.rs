use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Model, ModelError, Result, CONTEXT_ENCODER, EVENT_ENCODER};

/// Overwrites the target's event encoder with the donor's context encoder.
/// Nothing else in the target changes; any shape difference aborts before
/// a single value is written.
pub fn transfer_encoder_weights(donor: &Model, target: &mut Model) -> Result<()> {
    let mut plan: Vec<(String, String)> = Vec::new();
    for (_, name, t) in target.params.iter() {
        let Some(rest) = name.strip_prefix(EVENT_ENCODER) else {
            continue;
        };
        let src = format!("{CONTEXT_ENCODER}{rest}");
        let d = donor
            .params
            .by_name(&src)
            .ok_or_else(|| ModelError::Transfer(format!("donor lacks {src}")))?;
        if d.shape() != t.shape() {
            return Err(ModelError::Transfer(format!(
                "{src} is {:?} but {name} is {:?}",
                d.shape(),
                t.shape()
            )));
        }
        plan.push((src, name.into()));
    }
    if plan.is_empty() {
        return Err(ModelError::Transfer("target has no event encoder".into()));
    }
    for (src, dst) in plan {
        let values = donor.params.by_name(&src).expect("checked above").clone();
        target.params.assign(&dst, &values)?;
    }
    Ok(())
}
