//! Classifier backed by a child process speaking line-delimited JSON.
//!
//! Request:  `{"shape":[H,W,C],"range":L,"pixels":[...]}\n`
//! Response: `{"label":K}\n`
//!
//! Exactly one response line per request; requests are never pipelined.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Classifier, Label};
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleRequest {
    pub shape: Shape,
    pub range: f64,
    pub pixels: Vec<f64>,
}

impl OracleRequest {
    pub fn from_image(image: &ImageTensor) -> Self {
        Self {
            shape: image.shape(),
            range: image.range(),
            pixels: image.pixels().to_vec(),
        }
    }

    pub fn into_image(self) -> Result<ImageTensor> {
        ImageTensor::new(self.shape, self.range, self.pixels)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleResponse {
    pub label: Label,
}

struct Pipes {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ExternalOracle {
    command: String,
    num_classes: Option<usize>,
    pipes: Mutex<Pipes>,
}

impl ExternalOracle {
    /// Starts `command` through `sh -c`. When `num_classes` is given, labels
    /// at or above it are rejected.
    pub fn spawn(command: &str, num_classes: Option<usize>) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            command: command.to_string(),
            num_classes,
            pipes: Mutex::new(Pipes { child, stdin, stdout }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl Classifier for ExternalOracle {
    fn classify(&self, image: &ImageTensor) -> Result<Label> {
        let mut line = serde_json::to_string(&OracleRequest::from_image(image))?;
        line.push('\n');

        let mut pipes = self.pipes.lock().unwrap_or_else(|e| e.into_inner());
        pipes
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| pipes.stdin.flush())
            .map_err(|e| Error::ExternalProtocol(format!("writing request: {e}")))?;

        let mut reply = String::new();
        let n = pipes
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::ExternalProtocol(format!("reading response: {e}")))?;
        if n == 0 {
            return Err(Error::ExternalProtocol(format!(
                "`{}` closed its output without answering",
                self.command
            )));
        }
        let response: OracleResponse = serde_json::from_str(reply.trim_end())
            .map_err(|e| Error::ExternalProtocol(format!("bad response {:?}: {e}", reply.trim_end())))?;
        if let Some(k) = self.num_classes {
            if response.label.0 >= k {
                return Err(Error::LabelOutOfRange {
                    label: response.label,
                    num_classes: k,
                });
            }
        }
        Ok(response.label)
    }

    fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        let pipes = self.pipes.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = pipes.child.kill();
        let _ = pipes.child.wait();
    }
}
