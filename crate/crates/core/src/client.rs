//! Client side of the channel protocol: a blocking request/response call
//! over TCP, or against an in-process server.

use std::net::TcpStream;

use thiserror::Error;

use crate::protocol::{decode, encode, read_message, write_message, ProtocolError, WireMessage};
use crate::server::ChannelServer;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to channel server at {endpoint}: {source}")]
    Connect {
        endpoint: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server closed the connection")]
    Closed,
}

/// Anything that answers one request with one response.
pub trait ChannelService {
    fn call(&mut self, request: &WireMessage) -> Result<WireMessage, ClientError>;
}

pub struct TcpChannelClient {
    stream: TcpStream,
}

impl TcpChannelClient {
    pub fn connect(endpoint: &str) -> Result<TcpChannelClient, ClientError> {
        let stream = TcpStream::connect(endpoint).map_err(|source| ClientError::Connect {
            endpoint: endpoint.to_owned(),
            source,
        })?;
        stream.set_nodelay(true).map_err(|e| ClientError::Protocol(e.into()))?;
        Ok(TcpChannelClient { stream })
    }
}

impl ChannelService for TcpChannelClient {
    fn call(&mut self, request: &WireMessage) -> Result<WireMessage, ClientError> {
        write_message(&mut self.stream, request)?;
        read_message(&mut self.stream)?.ok_or(ClientError::Closed)
    }
}

/// In-process server. Messages still go through the wire encoding so both
/// transports behave identically.
#[derive(Default)]
pub struct EmbeddedChannelClient {
    server: ChannelServer,
}

impl EmbeddedChannelClient {
    pub fn new(server: ChannelServer) -> EmbeddedChannelClient {
        EmbeddedChannelClient { server }
    }

    pub fn server(&self) -> &ChannelServer {
        &self.server
    }
}

impl ChannelService for EmbeddedChannelClient {
    fn call(&mut self, request: &WireMessage) -> Result<WireMessage, ClientError> {
        let request = decode(&encode(request)?)?;
        let reply = self.server.handle(request);
        Ok(decode(&encode(&reply)?)?)
    }
}
