//! Generated profiles and the strict reply parser.

use serde::{Deserialize, Serialize};

use semrec_core::align::EntityKind;

use crate::client::{ChatMessage, ServiceClient};
use crate::prompt::{Prompt, RETRY_SUFFIX};
use crate::{Error, Result};

/// One line of a profile file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub id: String,
    pub kind: EntityKind,
    pub profile: String,
    pub reasoning: String,
    /// Model that wrote the profile (`fallback` for pseudo-profiles).
    pub model: String,
    /// Fingerprint of the prompt that produced it.
    pub fp: String,
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        if self.profile.trim().is_empty() || self.reasoning.trim().is_empty() {
            return Err(Error::Embedding(format!("{} {} has an empty profile or reasoning", self.kind, self.id)));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reply {
    reasoning: String,
    profile: String,
}

/// Parses a reply that must be exactly one JSON object with non-empty
/// string fields `reasoning` and `profile`. Returns `(reasoning, profile)`.
pub fn parse_profile_reply(text: &str) -> Option<(String, String)> {
    let r: Reply = serde_json::from_str(text.trim()).ok()?;
    (!r.reasoning.trim().is_empty() && !r.profile.trim().is_empty()).then_some((r.reasoning, r.profile))
}

/// A profile together with how many corrective re-asks it took.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generated {
    pub profile: Profile,
    pub retries: usize,
}

/// Asks the chat service for a profile. An unparseable reply is answered
/// with a corrective message, at most `retry_limit` times.
pub fn generate_profile(client: &ServiceClient, id: &str, kind: EntityKind, prompt: &Prompt) -> Result<Generated> {
    let limit = client.config().retry_limit;
    let mut messages = vec![ChatMessage::system(&prompt.system), ChatMessage::user(&prompt.user)];
    for attempt in 0..=limit {
        let reply = client.chat(&messages)?;
        if let Some((reasoning, profile)) = parse_profile_reply(&reply) {
            return Ok(Generated {
                profile: Profile {
                    id: id.to_owned(),
                    kind,
                    profile,
                    reasoning,
                    model: client.config().chat_model.clone(),
                    fp: prompt.fingerprint(),
                },
                retries: attempt,
            });
        }
        log::debug!("{kind} {id}: unparseable reply on attempt {}", attempt + 1);
        if attempt == limit {
            return Err(Error::Unparseable {
                attempts: limit + 1,
                last_reply: reply.chars().take(200).collect(),
            });
        }
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(RETRY_SUFFIX));
    }
    unreachable!("the loop returns on its last attempt")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_parsing() {
        assert_eq!(
            parse_profile_reply(r#" {"reasoning":"r","profile":"p"} "#),
            Some(("r".into(), "p".into()))
        );
        for bad in [
            "Sure! Here it is: {\"reasoning\":\"r\",\"profile\":\"p\"}",
            "```json\n{\"reasoning\":\"r\",\"profile\":\"p\"}\n```",
            r#"{"reasoning":"r"}"#,
            r#"{"reasoning":"r","profile":""}"#,
            r#"{"reasoning":"r","profile":"p","extra":1}"#,
            r#"{"reasoning":"r","profile":3}"#,
            "",
        ] {
            assert_eq!(parse_profile_reply(bad), None, "{bad}");
        }
    }

    #[test]
    fn profile_line_schema() {
        let p = Profile {
            id: "b1".into(),
            kind: EntityKind::Item,
            profile: "p".into(),
            reasoning: "r".into(),
            model: "m".into(),
            fp: "f".into(),
        };
        let line = serde_json::to_string(&p).unwrap();
        assert_eq!(line, r#"{"id":"b1","kind":"item","profile":"p","reasoning":"r","model":"m","fp":"f"}"#);
        assert_eq!(serde_json::from_str::<Profile>(&line).unwrap(), p);
    }
}
