//! Task files: one JSON object `{task_id, environment, payload}` per line.

use std::path::Path;

use council_core::TaskSpec;

use crate::error::FileError;

/// Blank lines are skipped; errors name the 1-based line.
pub fn parse_tasks(text: &str, path: &Path) -> Result<Vec<TaskSpec>, FileError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: TaskSpec = serde_json::from_str(line).map_err(|e| FileError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(task);
    }
    Ok(out)
}

pub fn read_tasks(path: &Path) -> Result<Vec<TaskSpec>, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    parse_tasks(&text, path)
}

pub fn format_tasks(tasks: &[TaskSpec]) -> String {
    tasks
        .iter()
        .map(|t| serde_json::to_string(t).expect("tasks serialize") + "\n")
        .collect()
}

pub fn write_tasks(path: &Path, tasks: &[TaskSpec]) -> Result<(), FileError> {
    std::fs::write(path, format_tasks(tasks)).map_err(|e| FileError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use council_core::Payload;

    #[test]
    fn round_trip_and_line_numbers() {
        let tasks = vec![
            TaskSpec {
                task_id: "a".into(),
                environment: "game24".into(),
                payload: Payload::Numbers(vec![4, 4, 10, 10]),
            },
            TaskSpec {
                task_id: "b".into(),
                environment: "synthetic".into(),
                payload: Payload::Synthetic {
                    family: "jade".into(),
                    instance: 7,
                },
            },
        ];
        let text = format_tasks(&tasks);
        assert_eq!(parse_tasks(&text, Path::new("t")).unwrap(), tasks);
        let broken = format!("{}\n{{oops\n", text.lines().next().unwrap());
        assert_eq!(
            parse_tasks(&broken, Path::new("t")).unwrap_err().line(),
            Some(2)
        );
    }
}
