// Runs the full oracle suite, including the Monte Carlo checks.
fn main() -> kova::Result<()> {
    let reports = kova::verify::default_suite(false)?;
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", reports.len());
    Ok(())
}
