use mst_service::{load_state, serve, Settings};

#[tokio::main]
async fn main() {
    env_logger::init();
    let settings = match Settings::from_env() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("mst-service: {e}");
            std::process::exit(2);
        }
    };
    let state = match load_state(&settings) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("mst-service: cannot load {}: {e}", settings.checkpoint.display());
            std::process::exit(1);
        }
    };
    if let Err(e) = serve(state, settings.port).await {
        eprintln!("mst-service: {e}");
        std::process::exit(1);
    }
}
