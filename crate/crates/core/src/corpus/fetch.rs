use std::collections::{HashMap, VecDeque};
use std::io::Read;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::header::LOCATION;
use url::Url;

use crate::corpus::ManifestEntry;
use crate::error::{Error, Result};

pub const USER_AGENT: &str = concat!(
    "nlicheck/",
    env!("CARGO_PKG_VERSION"),
    " (privacy-policy research crawler)"
);

#[derive(Clone, Debug)]
pub struct FetchSettings {
    pub timeout: Duration,
    pub retries: u32,
    /// first retry waits this long, doubling afterwards
    pub backoff: Duration,
    /// minimum gap between requests to the same host
    pub per_host_delay: Duration,
    pub max_body: usize,
    pub max_redirects: usize,
    pub jobs: usize,
    pub user_agent: String,
}

impl Default for FetchSettings {
    fn default() -> Self {
        FetchSettings {
            timeout: Duration::from_secs(20),
            retries: 2,
            backoff: Duration::from_millis(500),
            per_host_delay: Duration::from_secs(1),
            max_body: 5 * 1024 * 1024,
            max_redirects: 5,
            jobs: 8,
            user_agent: USER_AGENT.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchedPage {
    pub requested_url: String,
    pub final_url: String,
    pub status: u16,
    pub body: Vec<u8>,
}

enum Attempt {
    Done(FetchedPage),
    Retry(Error),
}

pub struct Fetcher {
    client: Client,
    settings: FetchSettings,
}

impl Fetcher {
    pub fn new(settings: FetchSettings) -> Result<Self> {
        let client = Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(settings.timeout)
            .user_agent(settings.user_agent.clone())
            .build()
            .map_err(|e| Error::Fetch(format!("cannot build HTTP client: {e}")))?;
        Ok(Fetcher { client, settings })
    }

    pub fn settings(&self) -> &FetchSettings {
        &self.settings
    }

    /// GET with manual redirect following and bounded retries on network
    /// errors and 5xx responses.
    pub fn fetch(&self, url: &str) -> Result<FetchedPage> {
        let mut wait = self.settings.backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(url)? {
                Attempt::Done(page) => return Ok(page),
                Attempt::Retry(err) if attempt < self.settings.retries => {
                    log::debug!("retrying {url} after: {err}");
                    std::thread::sleep(wait);
                    wait *= 2;
                    attempt += 1;
                }
                Attempt::Retry(err) => return Err(err),
            }
        }
    }

    fn attempt(&self, url: &str) -> Result<Attempt> {
        let mut current = Url::parse(url).map_err(|e| Error::Fetch(format!("{url}: {e}")))?;
        let mut hops = 0;
        loop {
            let resp = match self.client.get(current.clone()).send() {
                Ok(r) => r,
                Err(e) => return Ok(Attempt::Retry(Error::Fetch(format!("{current}: {e}")))),
            };
            let status = resp.status();
            if status.is_redirection() {
                let Some(loc) = resp.headers().get(LOCATION).and_then(|v| v.to_str().ok()) else {
                    return Err(Error::Fetch(format!("{current}: redirect {status} without Location")));
                };
                if hops == self.settings.max_redirects {
                    return Err(Error::Fetch(format!(
                        "{url}: more than {} redirects",
                        self.settings.max_redirects
                    )));
                }
                current = current
                    .join(loc)
                    .map_err(|e| Error::Fetch(format!("{current}: bad Location {loc:?}: {e}")))?;
                hops += 1;
                continue;
            }
            if status.is_server_error() {
                return Ok(Attempt::Retry(Error::Fetch(format!("{current}: HTTP {}", status.as_u16()))));
            }
            if status.as_u16() >= 400 {
                return Err(Error::Fetch(format!("{current}: HTTP {}", status.as_u16())));
            }
            let cap = self.settings.max_body;
            let mut body = Vec::new();
            if let Err(e) = resp.take(cap as u64 + 1).read_to_end(&mut body) {
                return Ok(Attempt::Retry(Error::Fetch(format!("{current}: reading body: {e}"))));
            }
            if body.len() > cap {
                return Err(Error::Fetch(format!("{current}: body truncated at the {cap}-byte limit")));
            }
            return Ok(Attempt::Done(FetchedPage {
                requested_url: url.to_string(),
                final_url: current.to_string(),
                status: status.as_u16(),
                body,
            }));
        }
    }

    /// Fetches every entry. Entries for the same host are fetched one at a
    /// time with `per_host_delay` between them; different hosts proceed in
    /// parallel on up to `jobs` threads. Results come back in input order.
    pub fn fetch_all(&self, entries: &[ManifestEntry]) -> Vec<Result<FetchedPage>> {
        let mut by_host: Vec<(String, Vec<usize>)> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            let host = Url::parse(&e.policy_url)
                .ok()
                .and_then(|u| u.host_str().map(|h| format!("{h}:{}", u.port_or_known_default().unwrap_or(0))))
                .unwrap_or_default();
            let k = *slot.entry(host.clone()).or_insert_with(|| {
                by_host.push((host, Vec::new()));
                by_host.len() - 1
            });
            by_host[k].1.push(i);
        }
        let queue = Mutex::new(by_host.into_iter().collect::<VecDeque<_>>());
        let results: Mutex<Vec<Option<Result<FetchedPage>>>> = Mutex::new((0..entries.len()).map(|_| None).collect());
        let workers = self.settings.jobs.max(1).min(entries.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let Some((_, indices)) = queue.lock().unwrap().pop_front() else {
                        break;
                    };
                    let mut last: Option<Instant> = None;
                    for i in indices {
                        if let Some(t) = last {
                            let gap = t.elapsed();
                            if gap < self.settings.per_host_delay {
                                std::thread::sleep(self.settings.per_host_delay - gap);
                            }
                        }
                        let r = self.fetch(&entries[i].policy_url);
                        last = Some(Instant::now());
                        results.lock().unwrap()[i] = Some(r);
                    }
                });
            }
        });
        results
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every entry fetched"))
            .collect()
    }
}
