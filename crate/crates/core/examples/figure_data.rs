// Data behind a figure, written as CSV and a static SVG (fig4 by default; pass
// another name such as `fig3` on the command line).

use bypass_qkd::cli::{self, FigureName, FigureOptions};

pub fn run_example_for(name: FigureName) -> Result<(), Box<dyn std::error::Error>> {
    let fig = cli::figure(name, &FigureOptions::default())?;
    println!("{}: {} rows, columns {:?}", fig.title, fig.rows.len(), fig.columns);
    fig.write_csv(std::io::stdout().lock())?;
    let svg = cli::render_svg(&fig);
    let path = std::env::temp_dir().join(format!("{}.svg", name.name()));
    std::fs::write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    run_example_for(FigureName::Fig4)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    match std::env::args().nth(1) {
        Some(name) => run_example_for(name.parse()?),
        None => run_example(),
    }
}
