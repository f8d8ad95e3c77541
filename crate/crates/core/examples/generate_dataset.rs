//! Generates a small puzzle dataset and a small fragment dataset, writes
//! both to disk and reads them back.

use reassembly::data::{generate_tasks, read_dataset, write_dataset, GenerateConfig, TaskKind};

fn main() -> reassembly::Result<()> {
    let dir = std::env::temp_dir().join("reassembly-example");
    std::fs::create_dir_all(&dir)?;
    for task in [TaskKind::Puzzle2d, TaskKind::Frag3d] {
        let cfg = GenerateConfig { task, count: 6, ..Default::default() };
        let tasks = generate_tasks(&cfg)?;
        let path = dir.join(format!("{task:?}.bin").to_lowercase());
        write_dataset(&path, &tasks)?;
        let back = read_dataset(&path)?;
        assert_eq!(back, tasks);
        let sizes: Vec<usize> = tasks.iter().map(|t| t.len()).collect();
        println!("{task:?}: {} instances, pieces {sizes:?}, {} bytes at {}", tasks.len(), std::fs::metadata(&path)?.len(), path.display());
    }
    Ok(())
}
