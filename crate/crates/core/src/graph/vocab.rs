use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::env::RoomType;
use crate::error::{Error, Result};

/// Which side of the known/novel target split a category falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectSplit {
    Known,
    Novel,
}

impl ObjectSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectSplit::Known => "known",
            ObjectSplit::Novel => "novel",
        }
    }
}

impl std::str::FromStr for ObjectSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known" => Ok(ObjectSplit::Known),
            "novel" => Ok(ObjectSplit::Novel),
            _ => Err(Error::Value(format!("unknown object split '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Category {
    pub name: String,
    /// Semantic group, e.g. "fruit". Drives embedding generation.
    pub group: String,
    pub split: ObjectSplit,
    /// Room types the category appears in; `None` means every room type.
    pub rooms: Option<Vec<RoomType>>,
}

impl Category {
    pub fn new(name: &str, group: &str, split: ObjectSplit) -> Self {
        Self {
            name: name.to_string(),
            group: group.to_string(),
            split,
            rooms: None,
        }
    }

    pub fn appears_in(&self, room: RoomType) -> bool {
        self.rooms.as_ref().is_none_or(|r| r.contains(&room))
    }
}

/// Ordered category list with dense indices `0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    categories: Vec<Category>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Contract("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(categories.len());
        for (i, c) in categories.iter().enumerate() {
            if c.name.is_empty() || c.name.contains(char::is_whitespace) {
                return Err(Error::Value(format!("invalid category name '{}'", c.name)));
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::Value(format!("duplicate category '{}'", c.name)));
            }
        }
        Ok(Self { categories, index })
    }

    /// Built-in desk vocabulary: four appliance anchors, each with two
    /// satellites from one semantic group, one of which is held out as novel.
    pub fn desk() -> Self {
        use ObjectSplit::*;
        let spec = [
            ("fridge", "appliance", Known),
            ("coffee_machine", "appliance", Known),
            ("sink", "appliance", Known),
            ("stove", "appliance", Known),
            ("apple", "fruit", Known),
            ("mango", "fruit", Novel),
            ("mug", "drinkware", Known),
            ("glass", "drinkware", Novel),
            ("bowl", "dishware", Known),
            ("plate", "dishware", Novel),
            ("pan", "cookware", Known),
            ("pot", "cookware", Novel),
        ];
        let cats = spec
            .iter()
            .map(|&(n, g, s)| Category::new(n, g, s))
            .collect();
        Self::new(cats).expect("built-in vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category(&self, i: usize) -> &Category {
        &self.categories[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.categories[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Distinct groups in first-appearance order.
    pub fn groups(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.categories {
            if !out.contains(&c.group.as_str()) {
                out.push(&c.group);
            }
        }
        out
    }

    pub fn in_room(&self, room: RoomType) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.categories[i].appears_in(room))
            .collect()
    }

    /// Navigation targets of `split` for scenes of `room`.
    pub fn targets(&self, room: RoomType, split: ObjectSplit) -> Vec<usize> {
        self.in_room(room)
            .into_iter()
            .filter(|&i| self.categories[i].split == split)
            .collect()
    }

    /// TSV: `name  group  known|novel  rooms` where rooms is `*` or a
    /// comma-separated list. `#` starts a comment line.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut cats = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(Error::parse(
                    source_name,
                    idx + 1,
                    "expected name, group, known|novel[, rooms]",
                ));
            }
            let split = fields[2]
                .parse()
                .map_err(|e: Error| Error::parse(source_name, idx + 1, e.to_string()))?;
            let rooms = match fields.get(3).map(|s| s.trim()) {
                None | Some("*") | Some("") => None,
                Some(list) => Some(
                    list.split(',')
                        .map(|r| r.trim().parse::<RoomType>())
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?,
                ),
            };
            cats.push(Category {
                name: fields[0].trim().to_string(),
                group: fields[1].trim().to_string(),
                split,
                rooms,
            });
        }
        Self::new(cats)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# name\tgroup\tsplit\trooms\n");
        for c in &self.categories {
            let rooms = match &c.rooms {
                None => "*".to_string(),
                Some(r) => r.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(","),
            };
            writeln!(out, "{}\t{}\t{}\t{}", c.name, c.group, c.split.as_str(), rooms).unwrap();
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_vocabulary_shape() {
        let v = Vocabulary::desk();
        assert_eq!(v.len(), 12);
        assert_eq!(v.targets(RoomType::Kitchen, ObjectSplit::Known).len(), 8);
        assert_eq!(v.targets(RoomType::Kitchen, ObjectSplit::Novel).len(), 4);
        assert_eq!(v.groups().len(), 5);
        assert_eq!(v.index_of("mug"), Some(6));
    }

    #[test]
    fn text_round_trip() {
        let mut cats = Vocabulary::desk().categories().to_vec();
        cats[0].rooms = Some(vec![RoomType::Kitchen, RoomType::Bathroom]);
        let v = Vocabulary::new(cats).unwrap();
        assert_eq!(Vocabulary::parse(&v.to_text(), "mem").unwrap(), v);
        assert!(!v.category(0).appears_in(RoomType::Bedroom));
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let c = Category::new("a", "g", ObjectSplit::Known);
        assert!(Vocabulary::new(vec![c.clone(), c]).is_err());
        assert!(matches!(Vocabulary::new(vec![]), Err(Error::Contract(_))));
        let err = Vocabulary::parse("a\tg\tmaybe\n", "v.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
