//! Frozen experiment configurations shipped with the crate.

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;

const RECIPES: &[(&str, &str)] = &[
    ("fig2-linear-identity-d20", include_str!("../../recipes/fig2-linear-identity-d20.json")),
    ("fig2-logistic-identity-d20", include_str!("../../recipes/fig2-logistic-identity-d20.json")),
    ("fig3-linear-equicorr-d20", include_str!("../../recipes/fig3-linear-equicorr-d20.json")),
    ("fig3-logistic-equicorr-d20", include_str!("../../recipes/fig3-logistic-equicorr-d20.json")),
    ("fig4-logistic-equicorr-d20-msweep", include_str!("../../recipes/fig4-logistic-equicorr-d20-msweep.json")),
    ("fig5-linear-identity-d20-msweep", include_str!("../../recipes/fig5-linear-identity-d20-msweep.json")),
    ("fig5-logistic-identity-d100-msweep", include_str!("../../recipes/fig5-logistic-identity-d100-msweep.json")),
    ("fig5-logistic-identity-d20-msweep", include_str!("../../recipes/fig5-logistic-identity-d20-msweep.json")),
    ("newton-linear-d5", include_str!("../../recipes/newton-linear-d5.json")),
    ("newton-logistic-d5", include_str!("../../recipes/newton-logistic-d5.json")),
    ("table2-linear-equicorr-d100", include_str!("../../recipes/table2-linear-equicorr-d100.json")),
    ("table2-linear-equicorr-d20", include_str!("../../recipes/table2-linear-equicorr-d20.json")),
    ("table2-linear-equicorr-d5", include_str!("../../recipes/table2-linear-equicorr-d5.json")),
    ("table2-linear-identity-d100", include_str!("../../recipes/table2-linear-identity-d100.json")),
    ("table2-linear-identity-d20", include_str!("../../recipes/table2-linear-identity-d20.json")),
    ("table2-linear-identity-d5", include_str!("../../recipes/table2-linear-identity-d5.json")),
    ("table2-logistic-equicorr-d100", include_str!("../../recipes/table2-logistic-equicorr-d100.json")),
    ("table2-logistic-equicorr-d20", include_str!("../../recipes/table2-logistic-equicorr-d20.json")),
    ("table2-logistic-equicorr-d5", include_str!("../../recipes/table2-logistic-equicorr-d5.json")),
    ("table2-logistic-identity-d100", include_str!("../../recipes/table2-logistic-identity-d100.json")),
    ("table2-logistic-identity-d20", include_str!("../../recipes/table2-logistic-identity-d20.json")),
    ("table2-logistic-identity-d5", include_str!("../../recipes/table2-logistic-identity-d5.json")),
    ("table3-linear-subsampling-d20", include_str!("../../recipes/table3-linear-subsampling-d20.json")),
    ("table4-logistic-subsampling-d20", include_str!("../../recipes/table4-logistic-subsampling-d20.json")),
    ("table5-directions-logistic-equicorr", include_str!("../../recipes/table5-directions-logistic-equicorr.json")),
    ("table5-directions-logistic-identity", include_str!("../../recipes/table5-directions-logistic-identity.json")),
    ("table6-directions-linear-equicorr", include_str!("../../recipes/table6-directions-linear-equicorr.json")),
    ("table6-directions-linear-identity", include_str!("../../recipes/table6-directions-linear-identity.json")),
    ("table7-multiquery-logistic-d100", include_str!("../../recipes/table7-multiquery-logistic-d100.json")),
    ("table7-multiquery-logistic-d20", include_str!("../../recipes/table7-multiquery-logistic-d20.json")),
    ("table8-multiquery-linear-d100", include_str!("../../recipes/table8-multiquery-linear-d100.json")),
    ("table8-multiquery-linear-d20", include_str!("../../recipes/table8-multiquery-linear-d20.json")),
    ("tableD2-quantile-d20", include_str!("../../recipes/tableD2-quantile-d20.json")),
    ("tableD2-quantile-d5", include_str!("../../recipes/tableD2-quantile-d5.json")),
];

pub fn names() -> Vec<&'static str> {
    RECIPES.iter().map(|(n, _)| *n).collect()
}

/// The configs of a recipe; each file holds a JSON array.
pub fn load(name: &str) -> Result<Vec<ExperimentConfig>> {
    let (_, text) = RECIPES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownRecipe(name.to_string()))?;
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_parses_and_validates() {
        assert!(!names().is_empty());
        for name in names() {
            let cfgs = load(name).unwrap();
            assert!(!cfgs.is_empty(), "{name}");
            for c in &cfgs {
                c.validate().unwrap_or_else(|e| panic!("{name}/{}: {e}", c.run_id));
                assert!(c.run_id.starts_with(name), "{name}/{}", c.run_id);
            }
            let mut ids: Vec<&str> = cfgs.iter().map(|c| c.run_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), cfgs.len(), "{name}");
        }
    }

    #[test]
    fn unknown_recipe() {
        assert!(matches!(load("nope"), Err(Error::UnknownRecipe(_))));
    }
}
