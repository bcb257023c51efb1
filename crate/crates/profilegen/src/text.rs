//! Raw textual side information of items and the per-user view built from
//! interactions.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use semrec_core::corpus::InteractionSet;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Review {
    pub user: String,
    pub text: String,
}

/// Title, optional description, dataset-specific attributes and reviews of
/// one item. One JSON object per line in item text files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemText {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Key/value pairs in their original order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reviews: Vec<Review>,
}

impl ItemText {
    pub fn validate(&self) -> Result<()> {
        if self.title.trim().is_empty() {
            return Err(Error::Prompt {
                entity: self.id.clone(),
                msg: "item title is empty".into(),
            });
        }
        Ok(())
    }

    /// The description if present and not blank.
    pub fn description(&self) -> Option<&str> {
        self.description.as_deref().filter(|d| !d.trim().is_empty())
    }
}

/// One interacted item as seen from a user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserItem {
    pub item: String,
    pub title: String,
    /// This user's review of the item, if any.
    pub review: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserContext {
    pub user: String,
    pub items: Vec<UserItem>,
}

pub fn load_item_texts(path: &Path) -> Result<Vec<ItemText>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let item: ItemText = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        item.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

/// The interacted items of every user in `interactions`, in user index order,
/// with the user's own review attached where the item texts contain one.
/// Every interacted item needs a text entry.
pub fn user_contexts(interactions: &InteractionSet, items: &[ItemText]) -> Result<Vec<UserContext>> {
    let by_id: HashMap<&str, &ItemText> = items.iter().map(|t| (t.id.as_str(), t)).collect();
    let ids = &interactions.ids;
    let mut out = Vec::with_capacity(ids.users.len());
    for (u, seen) in interactions.user_items().into_iter().enumerate() {
        let user = ids.users.raw(u as u32).to_owned();
        let mut ctx = UserContext {
            user: user.clone(),
            items: Vec::with_capacity(seen.len()),
        };
        for v in seen {
            let raw = ids.items.raw(v);
            let text = by_id.get(raw).ok_or_else(|| Error::Prompt {
                entity: user.clone(),
                msg: format!("interacted item {raw} has no text entry"),
            })?;
            ctx.items.push(UserItem {
                item: raw.to_owned(),
                title: text.title.clone(),
                review: text.reviews.iter().find(|r| r.user == user).map(|r| r.text.clone()),
            });
        }
        out.push(ctx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_full_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("items.jsonl");
        std::fs::write(
            &p,
            concat!(
                r#"{"id":"b1","title":"Dune"}"#,
                "\n\n",
                r#"{"id":"b2","title":"Emma","description":"A novel.","attributes":[["genre","classic"]],"reviews":[{"user":"u1","text":"Lovely"}]}"#,
                "\n"
            ),
        )
        .unwrap();
        let items = load_item_texts(&p).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].attributes, vec![("genre".to_owned(), "classic".to_owned())]);
        assert_eq!(items[0].description(), None);
    }

    #[test]
    fn empty_title_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("items.jsonl");
        std::fs::write(&p, "{\"id\":\"b1\",\"title\":\"Dune\"}\n{\"id\":\"b2\",\"title\":\" \"}\n").unwrap();
        let err = load_item_texts(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn user_contexts_attach_own_reviews() {
        let set = InteractionSet::from_pairs(&[("u1", "b1"), ("u1", "b2"), ("u2", "b2")]);
        let items = vec![
            ItemText {
                id: "b1".into(),
                title: "Dune".into(),
                description: None,
                attributes: vec![],
                reviews: vec![Review { user: "u2".into(), text: "meh".into() }],
            },
            ItemText {
                id: "b2".into(),
                title: "Emma".into(),
                description: None,
                attributes: vec![],
                reviews: vec![Review { user: "u1".into(), text: "great".into() }],
            },
        ];
        let ctx = user_contexts(&set, &items).unwrap();
        assert_eq!(ctx[0].user, "u1");
        assert_eq!(ctx[0].items[0].review, None);
        assert_eq!(ctx[0].items[1].review.as_deref(), Some("great"));
        assert_eq!(ctx[1].items.len(), 1);
        let missing = user_contexts(&set, &items[..1]);
        assert!(matches!(missing, Err(Error::Prompt { .. })));
    }
}
