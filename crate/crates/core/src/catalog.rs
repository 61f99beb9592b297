use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic class list with the thing/stuff split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCatalog {
    names: Vec<String>,
    is_thing: Vec<bool>,
}

const DEFAULT_CLASSES: [(&str, bool); 16] = [
    ("road", false),
    ("sidewalk", false),
    ("building", false),
    ("wall", false),
    ("fence", false),
    ("pole", false),
    ("light", false),
    ("sign", false),
    ("vegetation", false),
    ("sky", false),
    ("person", true),
    ("rider", true),
    ("car", true),
    ("bus", true),
    ("motorbike", true),
    ("bicycle", true),
];

impl ClassCatalog {
    pub fn new(names: Vec<String>, is_thing: Vec<bool>) -> Result<Self> {
        if names.len() != is_thing.len() {
            return Err(Error::InvalidValue(format!(
                "catalog has {} names but {} thing flags",
                names.len(),
                is_thing.len()
            )));
        }
        if names.len() < 2 {
            return Err(Error::InvalidValue("catalog needs at least 2 classes".into()));
        }
        if names.len() >= u16::MAX as usize {
            return Err(Error::InvalidValue("too many classes".into()));
        }
        let mut sorted = names.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidValue("class names must be unique".into()));
        }
        Ok(Self { names, is_thing })
    }

    pub fn from_pairs(pairs: &[(&str, bool)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|(n, _)| n.to_string()).collect(),
            pairs.iter().map(|(_, t)| *t).collect(),
        )
    }

    /// The 16-class street-scene catalog with 6 thing classes.
    pub fn cityscapes16() -> Self {
        Self::from_pairs(&DEFAULT_CLASSES).expect("static catalog is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class: u16) -> &str {
        &self.names[class as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_thing(&self, class: u16) -> bool {
        self.is_thing.get(class as usize).copied().unwrap_or(false)
    }

    pub fn thing_flags(&self) -> &[bool] {
        &self.is_thing
    }

    pub fn contains(&self, class: u16) -> bool {
        (class as usize) < self.names.len()
    }

    pub fn thing_classes(&self) -> impl Iterator<Item = u16> + '_ {
        (0..self.len() as u16).filter(|&c| self.is_thing(c))
    }

    pub fn stuff_classes(&self) -> impl Iterator<Item = u16> + '_ {
        (0..self.len() as u16).filter(|&c| !self.is_thing(c))
    }

    /// Fusion and panoptic evaluation need both kinds present.
    pub fn require_mixed(&self) -> Result<()> {
        if self.thing_classes().next().is_none() || self.stuff_classes().next().is_none() {
            return Err(Error::InvalidValue(
                "catalog needs at least one thing and one stuff class".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ClassCatalog {
    fn default() -> Self {
        Self::cityscapes16()
    }
}
