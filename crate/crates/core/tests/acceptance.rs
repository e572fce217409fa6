use elapsed_core::acceptance::Suite;
use elapsed_core::Execution;
use std::process::ExitCode;

fn main() -> ExitCode {
    let suite = Suite::new(Execution::Parallel);
    let outcomes = suite.all();
    for outcome in &outcomes {
        println!("{outcome}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
