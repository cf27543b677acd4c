//! Chat and embedding calls with retries, against a scripted transport.
//! With OPENAI_API_KEY set, `--live` sends one real chat request instead.

use std::sync::Arc;

use kg_denoise::llm::mock::{chat_reply, embedding_reply, fast_config, ScriptedTransport};
use kg_denoise::llm::{ChatMessage, LlmClient, ServiceConfig};
use kg_denoise::TransportError;

fn main() {
    if std::env::args().any(|a| a == "--live") {
        let client = LlmClient::new(ServiceConfig::default()).unwrap();
        match client.chat_complete(&[ChatMessage::user("Reply with the word OK.")]) {
            Ok(reply) => println!("live reply: {reply}"),
            Err(e) => println!("live call failed: {e}"),
        }
        return;
    }

    let transport = Arc::new(ScriptedTransport::new(vec![
        Err(TransportError::RateLimited),
        Err(TransportError::Server(503)),
        Ok(chat_reply("OK")),
    ]));
    let client = LlmClient::with_transport(fast_config(), transport.clone()).unwrap();
    let reply = client.chat_complete(&[ChatMessage::user("ping")]).unwrap();
    println!("reply {reply:?} after {} attempts", transport.calls());

    let vectors = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
    let transport = Arc::new(ScriptedTransport::new(vec![Ok(embedding_reply(&vectors))]));
    let client = LlmClient::with_transport(fast_config(), transport).unwrap();
    let got = client.embed_texts(&["a".into(), "b".into()]).unwrap();
    println!("embeddings: {got:?}");
}
