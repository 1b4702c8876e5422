//! Distance between two places along the "most logical route".
//!
//! The default [`GreatCircleRouter`] returns the straight-line distance.
//! [`RemoteRouter`] talks to an external routing service over a one-line
//! text protocol on TCP:
//!
//! ```text
//! -> ROUTE <mode> <origin_lat> <origin_lon> <dest_lat> <dest_lon>\n
//! <- OK <meters>\n            or    ERR <message>\n
//! ```

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::diary::TransportMode;
use crate::geo::{haversine_m, LatLon};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouterError {
    #[error("router unavailable: {0}")]
    RouterUnavailable(String),
    #[error("router rejected request: {0}")]
    Rejected(String),
    #[error("bad router url {0:?} (expected tcp://host:port)")]
    BadUrl(String),
}

pub trait Router: Send + Sync {
    fn route_m(&self, origin: LatLon, dest: LatLon, mode: TransportMode)
        -> Result<f64, RouterError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreatCircleRouter;

impl Router for GreatCircleRouter {
    fn route_m(&self, origin: LatLon, dest: LatLon, _: TransportMode) -> Result<f64, RouterError> {
        Ok(haversine_m(origin, dest))
    }
}

pub fn inferred_distance_m(
    origin: LatLon,
    dest: LatLon,
    mode: TransportMode,
    router: &dyn Router,
) -> Result<f64, RouterError> {
    router.route_m(origin, dest, mode)
}

#[derive(Debug, Clone)]
pub struct RemoteRouter {
    addr: SocketAddr,
    timeout: Duration,
}

impl RemoteRouter {
    /// Parses `tcp://host:port`.
    pub fn from_url(url: &str) -> Result<Self, RouterError> {
        let rest = url
            .strip_prefix("tcp://")
            .ok_or_else(|| RouterError::BadUrl(url.to_string()))?;
        let addr = rest
            .to_socket_addrs()
            .map_err(|_| RouterError::BadUrl(url.to_string()))?
            .next()
            .ok_or_else(|| RouterError::BadUrl(url.to_string()))?;
        Ok(RemoteRouter {
            addr,
            timeout: Duration::from_secs(5),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Router for RemoteRouter {
    fn route_m(
        &self,
        origin: LatLon,
        dest: LatLon,
        mode: TransportMode,
    ) -> Result<f64, RouterError> {
        let unavailable = |e: std::io::Error| RouterError::RouterUnavailable(e.to_string());
        let mut stream = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(unavailable)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(unavailable)?;
        writeln!(
            stream,
            "ROUTE {} {:.7} {:.7} {:.7} {:.7}",
            mode,
            origin.lat(),
            origin.lon(),
            dest.lat(),
            dest.lon()
        )
        .map_err(unavailable)?;
        let mut line = String::new();
        BufReader::new(stream)
            .read_line(&mut line)
            .map_err(unavailable)?;
        let line = line.trim();
        if let Some(msg) = line.strip_prefix("ERR") {
            return Err(RouterError::Rejected(msg.trim().to_string()));
        }
        line.strip_prefix("OK ")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|d| d.is_finite() && *d >= 0.0)
            .ok_or_else(|| RouterError::RouterUnavailable(format!("malformed reply {line:?}")))
    }
}

type CacheKey = (i64, i64, i64, i64, TransportMode);

fn cache_key(origin: LatLon, dest: LatLon, mode: TransportMode) -> CacheKey {
    let q = |x: f64| (x * 1e5).round() as i64;
    (q(origin.lat()), q(origin.lon()), q(dest.lat()), q(dest.lon()), mode)
}

/// Memoizes another router on coordinates rounded to 1e-5 degrees. The
/// travel mode is part of the key since routes differ by mode.
pub struct CachingRouter<R> {
    inner: R,
    cache: Mutex<HashMap<CacheKey, f64>>,
}

impl<R: Router> CachingRouter<R> {
    pub fn new(inner: R) -> Self {
        CachingRouter {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl<R: Router> Router for CachingRouter<R> {
    fn route_m(
        &self,
        origin: LatLon,
        dest: LatLon,
        mode: TransportMode,
    ) -> Result<f64, RouterError> {
        let key = cache_key(origin, dest, mode);
        if let Some(d) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*d);
        }
        // The lock is not held across the request; two racing misses both
        // ask the router and store the same answer.
        let d = self.inner.route_m(origin, dest, mode)?;
        self.cache.lock().expect("cache lock").insert(key, d);
        Ok(d)
    }
}

/// Uses `primary`, falling back to great-circle distance when it is
/// unavailable.
pub struct FallbackRouter<R> {
    primary: R,
}

impl<R: Router> FallbackRouter<R> {
    pub fn new(primary: R) -> Self {
        FallbackRouter { primary }
    }
}

impl<R: Router> Router for FallbackRouter<R> {
    fn route_m(
        &self,
        origin: LatLon,
        dest: LatLon,
        mode: TransportMode,
    ) -> Result<f64, RouterError> {
        match self.primary.route_m(origin, dest, mode) {
            Err(RouterError::RouterUnavailable(_)) => GreatCircleRouter.route_m(origin, dest, mode),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;

    fn place() -> LatLon {
        LatLon::new(52.09, 5.12).unwrap()
    }

    /// Serves `n` requests, answering twice the great-circle distance.
    fn spawn_server(n: usize) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("tcp://{}", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for stream in listener.incoming().take(n) {
                let mut stream = stream.unwrap();
                let mut line = String::new();
                BufReader::new(stream.try_clone().unwrap())
                    .read_line(&mut line)
                    .unwrap();
                let f: Vec<f64> = line
                    .split_whitespace()
                    .skip(2)
                    .map(|x| x.parse().unwrap())
                    .collect();
                let a = LatLon::new(f[0], f[1]).unwrap();
                let b = LatLon::new(f[2], f[3]).unwrap();
                writeln!(stream, "OK {}", 2.0 * haversine_m(a, b)).unwrap();
                seen.push(line.trim().to_string());
            }
            seen
        });
        (url, handle)
    }

    #[test]
    fn default_router_is_great_circle() {
        let a = place();
        let b = a.destination(10.0, 210.0);
        let d = inferred_distance_m(a, b, TransportMode::Walk, &GreatCircleRouter).unwrap();
        assert!((d - 210.0).abs() < 1e-6);
        assert_eq!(
            inferred_distance_m(a, a, TransportMode::Walk, &GreatCircleRouter).unwrap(),
            0.0
        );
    }

    #[test]
    fn remote_router_speaks_the_line_protocol() {
        let (url, server) = spawn_server(1);
        let router = RemoteRouter::from_url(&url).unwrap();
        let a = place();
        let b = a.destination(90.0, 100.0);
        let d = router.route_m(a, b, TransportMode::Bike).unwrap();
        // coordinates travel with 7 decimals (~1 cm)
        assert!((d - 200.0).abs() < 0.05, "{d}");
        let seen = server.join().unwrap();
        assert!(seen[0].starts_with("ROUTE Bike 52.0900000 5.1200000 "));
    }

    #[test]
    fn unreachable_router_is_unavailable_and_falls_back() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("tcp://{}", listener.local_addr().unwrap());
        drop(listener);
        let router = RemoteRouter::from_url(&url)
            .unwrap()
            .with_timeout(Duration::from_millis(200));
        let a = place();
        let b = a.destination(0.0, 50.0);
        assert!(matches!(
            router.route_m(a, b, TransportMode::Walk),
            Err(RouterError::RouterUnavailable(_))
        ));
        let fallback = FallbackRouter::new(router);
        assert!((fallback.route_m(a, b, TransportMode::Walk).unwrap() - 50.0).abs() < 1e-6);
    }

    #[test]
    fn bad_urls_are_rejected() {
        assert!(matches!(
            RemoteRouter::from_url("http://localhost:80"),
            Err(RouterError::BadUrl(_))
        ));
    }

    struct Counting(Arc<AtomicUsize>);

    impl Router for Counting {
        fn route_m(&self, o: LatLon, d: LatLon, m: TransportMode) -> Result<f64, RouterError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            GreatCircleRouter.route_m(o, d, m)
        }
    }

    #[test]
    fn cache_keys_on_rounded_coordinates() {
        let calls = Arc::new(AtomicUsize::new(0));
        let router = CachingRouter::new(Counting(calls.clone()));
        let a = place();
        let b = a.destination(0.0, 300.0);
        let b_jitter = LatLon::new(b.lat() + 1e-7, b.lon() - 1e-7).unwrap();
        router.route_m(a, b, TransportMode::Walk).unwrap();
        router.route_m(a, b_jitter, TransportMode::Walk).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        router.route_m(a, b, TransportMode::Car).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(router.cached_entries(), 2);
    }

    #[test]
    fn cache_is_shared_across_threads() {
        let calls = Arc::new(AtomicUsize::new(0));
        let router = Arc::new(CachingRouter::new(Counting(calls.clone())));
        let a = place();
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let router = router.clone();
                thread::spawn(move || {
                    let b = a.destination(45.0 * (i % 2) as f64, 500.0);
                    router.route_m(a, b, TransportMode::Walk).unwrap()
                })
            })
            .collect();
        let results: Vec<f64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(results.iter().all(|d| (d - 500.0).abs() < 1e-6));
        assert_eq!(router.cached_entries(), 2);
    }
}
