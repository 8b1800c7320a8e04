//! The default acoustic functional recipe.
//!
//! The channel-to-functional map lives in `config/egemaps_recipe.json` and
//! yields 88 values. Spectral balance measures (alpha ratio, Hammarberg
//! index, band slopes) contribute their mean only.

use turnclass_core::features::FunctionalRecipe;

pub const DEFAULT_RECIPE_JSON: &str = include_str!("../config/egemaps_recipe.json");

pub fn default_recipe() -> FunctionalRecipe {
    crate::io::parse_recipe(DEFAULT_RECIPE_JSON).expect("bundled recipe parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use turnclass_core::features::ACOUSTIC_DIM;

    #[test]
    fn default_recipe_has_88_outputs() {
        let r = default_recipe();
        assert_eq!(r.output_dim(), ACOUSTIC_DIM);
        assert_eq!(r.feature_names().len(), ACOUSTIC_DIM);
    }
}
