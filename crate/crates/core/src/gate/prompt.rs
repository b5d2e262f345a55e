use base64::Engine;
use thiserror::Error;

use crate::image::{ImageError, RgbImage};

/// Judge instructions, sent unchanged with every request.
pub const PROMPT_TEMPLATE: &str = include_str!("../../assets/judge_prompt.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("missing {0} image")]
    MissingImage(&'static str),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attachment {
    pub label: &'static str,
    pub mime: &'static str,
    pub bytes: Vec<u8>,
}

impl Attachment {
    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.mime,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

/// Prompt text plus PNG attachments in the order history, future RGB,
/// future contact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JudgeRequest {
    pub text: String,
    pub attachments: Vec<Attachment>,
}

pub const ATTACHMENT_LABELS: [&str; 3] = ["history", "future_rgb", "future_contact"];

pub fn build_prompt(
    history: Option<&RgbImage>,
    future: Option<&RgbImage>,
    contact: Option<&RgbImage>,
) -> Result<JudgeRequest, PromptError> {
    let mut attachments = Vec::with_capacity(3);
    for (label, img) in ATTACHMENT_LABELS
        .into_iter()
        .zip([history, future, contact])
    {
        let img = match img {
            Some(i) if i.width > 0 && i.height > 0 => i,
            _ => return Err(PromptError::MissingImage(label)),
        };
        attachments.push(Attachment {
            label,
            mime: "image/png",
            bytes: img.encode_png()?,
        });
    }
    Ok(JudgeRequest {
        text: PROMPT_TEMPLATE.to_string(),
        attachments,
    })
}
