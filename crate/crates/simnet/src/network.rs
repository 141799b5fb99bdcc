use std::time::Duration;

use trustzero_client::TrustClient;
use trustzero_core::{ServerId, SigAlgorithm, TrustDirectory};
use trustzero_gateway::{Gateway, GatewayConfig, GatewayHandle};
use trustzero_origin::{OriginConfig, OriginHandle, HEALTH_PATH};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("starting node {node}: {reason}")]
    Boot { node: String, reason: String },
    #[error("health check failed for {node}: {reason}")]
    Unhealthy { node: String, reason: String },
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("writing results: {0}")]
    Output(String),
}

/// Checks one gateway's key endpoint and its origin's health endpoint.
pub async fn probe(server_id: &ServerId, gateway_url: &str, origin_url: &str) -> Result<(), HarnessError> {
    let unhealthy = |reason: String| HarnessError::Unhealthy { node: server_id.to_string(), reason };
    let http = reqwest::Client::builder().timeout(Duration::from_secs(5)).build().expect("client builds");
    TrustClient::with_http(http.clone()).fetch_published_key(gateway_url).await.map_err(|e| unhealthy(e.to_string()))?;
    let resp = http
        .get(format!("{origin_url}{HEALTH_PATH}"))
        .send()
        .await
        .map_err(|e| unhealthy(format!("origin: {e}")))?;
    if !resp.status().is_success() {
        return Err(unhealthy(format!("origin health returned {}", resp.status())));
    }
    Ok(())
}

/// One gateway and the origin it protects.
pub struct Node {
    pub server_id: ServerId,
    pub gateway: GatewayHandle,
    pub origin: OriginHandle,
}

impl Node {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.gateway.base_url(), path)
    }
}

/// A booted set of nodes plus the directory assembled from their key endpoints.
pub struct Network {
    pub nodes: Vec<Node>,
    pub directory: TrustDirectory,
    client: TrustClient,
}

pub fn server_name(i: usize) -> ServerId {
    ServerId::new(format!("s{}", i + 1)).expect("generated id is valid")
}

/// Starts `n` gateway+origin pairs on ephemeral loopback ports, fetches
/// each gateway's published key and installs the resulting directory on
/// every gateway.
pub async fn boot_network(n: usize, algorithm: SigAlgorithm) -> Result<Network, HarnessError> {
    boot_network_with(n, algorithm, |_, _| {}).await
}

pub async fn boot_network_with(
    n: usize,
    algorithm: SigAlgorithm,
    tweak: impl Fn(usize, &mut GatewayConfig),
) -> Result<Network, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("need at least one server".into()));
    }
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let server_id = server_name(i);
        let boot = |reason: String| HarnessError::Boot { node: server_id.to_string(), reason };
        let origin = OriginHandle::spawn(OriginConfig::default()).await.map_err(|e| boot(e.to_string()))?;
        let mut cfg = GatewayConfig::new(server_id.clone(), origin.addr().to_string(), algorithm);
        tweak(i, &mut cfg);
        let gateway = Gateway::new(&cfg).map_err(|e| boot(e.to_string()))?;
        let gateway = GatewayHandle::spawn(gateway, cfg.listen_addr).await.map_err(|e| boot(e.to_string()))?;
        nodes.push(Node { server_id, gateway, origin });
    }
    let mut net = Network { nodes, directory: TrustDirectory::new(), client: TrustClient::new() };
    net.refresh_directory().await?;
    Ok(net)
}

impl Network {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn login_url(&self, i: usize) -> String {
        self.nodes[i].url("/login")
    }

    pub fn origin_contacts(&self) -> u64 {
        self.nodes.iter().map(|n| n.origin.request_count()).sum()
    }

    /// Rebuilds the directory from every key endpoint and pushes it to all
    /// gateways.
    pub async fn refresh_directory(&mut self) -> Result<&TrustDirectory, HarnessError> {
        let mut directory = TrustDirectory::new();
        for node in &self.nodes {
            let unhealthy = |reason: String| HarnessError::Unhealthy { node: node.server_id.to_string(), reason };
            let key = self.client.fetch_published_key(&node.gateway.base_url()).await.map_err(|e| unhealthy(e.to_string()))?;
            if key.server_id != node.server_id {
                return Err(unhealthy(format!("publishes key for {}", key.server_id)));
            }
            directory.insert_published(key).map_err(|e| unhealthy(e.to_string()))?;
        }
        for node in &self.nodes {
            node.gateway.gateway().set_directory(directory.clone());
        }
        self.directory = directory;
        Ok(&self.directory)
    }

    /// Every gateway serves its key and every origin answers its health probe.
    pub async fn health_check(&self) -> Result<(), HarnessError> {
        for node in &self.nodes {
            probe(&node.server_id, &node.gateway.base_url(), &node.origin.base_url()).await?;
        }
        Ok(())
    }

    /// Rotates node `i`'s key and redistributes the directory.
    pub async fn rotate(&mut self, i: usize) -> Result<&TrustDirectory, HarnessError> {
        let node = &self.nodes[i];
        node.gateway
            .gateway()
            .rotate_server_key()
            .map_err(|e| HarnessError::Boot { node: node.server_id.to_string(), reason: e.to_string() })?;
        self.refresh_directory().await
    }

    pub async fn teardown(self) {
        for node in self.nodes {
            node.gateway.shutdown().await;
            node.origin.shutdown().await;
        }
    }
}
