use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Row-major grayscale grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(height * width, data.len(), "image data does not match {height}x{width}");
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// One sample: text token ids, an image, the veracity label (1 = fake) and,
/// when known, whether text and image agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsRecord {
    pub id: String,
    pub text: Vec<u32>,
    pub image: Image,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<u8>,
}

impl NewsRecord {
    /// Consistency target, falling back to `1 − label` when unrecorded.
    pub fn consistency_target(&self) -> u8 {
        self.consistency.unwrap_or(1 - self.label)
    }
}

/// The four voting modules, in veto iteration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleId {
    Ip,
    Is,
    T,
    Mm,
}

impl ModuleId {
    pub const ALL: [ModuleId; 4] = [ModuleId::Ip, ModuleId::Is, ModuleId::T, ModuleId::Mm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleId::Ip => "ip",
            ModuleId::Is => "is",
            ModuleId::T => "t",
            ModuleId::Mm => "mm",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ip" => Ok(ModuleId::Ip),
            "is" => Ok(ModuleId::Is),
            "t" => Ok(ModuleId::T),
            "mm" => Ok(ModuleId::Mm),
            other => Err(format!("unknown module `{other}` (expected ip, is, t or mm)")),
        }
    }
}
