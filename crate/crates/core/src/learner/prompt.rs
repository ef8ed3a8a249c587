//! Prompt templates for the two modalities.

use serde::{Deserialize, Serialize};

use crate::render::{encode_image_payload, Payload, Stimulus};

/// Bumped whenever the template text changes; part of every cache key.
pub const PROMPT_TEMPLATE_VERSION: u32 = 1;

pub const REPLY_INSTRUCTION: &str = "Please reply only with the name of the concept.";

pub const BITMAP_TEMPLATE: &str = "Your task is to identify a concept drawn by hand. \
You will be provided with an image corresponding to a concept drawn by hand. \
Your task is to identify, based on the provided picture, the concept that someone has attempted to draw. \
Please reply only with the name of the concept.";

/// `{tikz}` is replaced by the drawing's TikZ code.
pub const COORDINATES_TEMPLATE: &str = "Your task is to identify a concept drawn by hand. \
You will be provided a TikZ picture format corresponding to a concept, where each stroke is indicated \
by the command 'draw' followed by a series of points in '(x,y)' format.\n\
The points are connected by straight lines, denoted by '--'. The strokes collectively represent a concept. \
Below is the TikZ picture code enclosed within triple backticks:\n\
```{tikz}```.\n\
Your task is to identify, based on the provided TikZ picture, the concept that someone has attempted to draw. \
Please reply only with the name of the concept.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Base64 PNG for the bitmap modality.
    pub image_base64: Option<String>,
}

pub fn build_prompt(stim: &Stimulus) -> Prompt {
    match &stim.payload {
        Payload::Png(bytes) => Prompt {
            text: BITMAP_TEMPLATE.to_owned(),
            image_base64: Some(encode_image_payload(bytes)),
        },
        Payload::Tikz(code) => Prompt {
            text: COORDINATES_TEMPLATE.replace("{tikz}", code),
            image_base64: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drawing::{ConceptName, Drawing, Stroke};
    use crate::render::{to_bitmap, Modality, RenderStyle};
    use crate::simplify::Epsilon;

    fn line() -> Drawing {
        Drawing::new(
            "d1",
            ConceptName::new("door"),
            true,
            vec![Stroke::from_coords(&[(0, 0), (10, 0)]).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn coordinates_prompt_embeds_code() {
        let stim = Stimulus::render(&line(), Epsilon::DATASET, Modality::Coordinates, &RenderStyle::default());
        let p = build_prompt(&stim);
        assert!(p.text.contains("```\\draw (0, 0) -- (10, 0);```"));
        assert!(p.image_base64.is_none());
        assert!(p.text.ends_with(REPLY_INSTRUCTION));
    }

    #[test]
    fn bitmap_prompt_attaches_image() {
        let d = line();
        let stim = Stimulus::render(&d, Epsilon::DATASET, Modality::Bitmap, &RenderStyle::default());
        let p = build_prompt(&stim);
        assert_eq!(p.image_base64.unwrap(), encode_image_payload(&to_bitmap(&d)));
        assert!(p.text.ends_with(REPLY_INSTRUCTION));
    }
}
