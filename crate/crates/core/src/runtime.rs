//! Browser-side snippets spliced into served scripts.
//!
//! Templates carry named placeholders written as `{NAME}` and are filled by a
//! single left-to-right pass, so substituted values (which may contain
//! arbitrary source text) are never rescanned.
//!
//! | placeholder       | meaning                                                   |
//! |-------------------|-----------------------------------------------------------|
//! | `{GLOBAL}`        | per-resource coverage array name                          |
//! | `{LOADER}`        | per-resource sidecar loader name                          |
//! | `{KEY_JSON}`      | `{"url":..,"hash":..}` of the resource                    |
//! | `{BEACON_URL}`    | where the coverage beacon is posted                       |
//! | `{FALLBACK_MS}`   | send delay when there is no window load event             |
//! | `{FID}`           | function id                                               |
//! | `{BODY_URL}`      | sidecar URL of one elided body                            |
//! | `{HEAD}`          | wrapper function head (`function`, `async()=>`, ...)      |
//! | `{ORIGINAL_BODY}` | the elided body text                                      |

use serde::{Deserialize, Serialize};

use crate::key::ResourceKey;

/// Marks the end of an arrow body that was converted from expression form.
pub const ARROW_RETURN_CLOSE: &str = ")/*jselide:ret*/;}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeTemplates {
    /// Declares the coverage array and schedules the beacon.
    pub prologue_tpl: String,
    /// Records one function execution.
    pub marker_tpl: String,
    /// Defines the synchronous, memoizing sidecar loader used by stubs.
    pub loader_tpl: String,
    /// Expression that fetches and directly evaluates one sidecar.
    pub stub_tpl: String,
    /// Sidecar text for non-arrow functions.
    pub sidecar_function_tpl: String,
    /// Sidecar text for arrows, which must keep their lexical `this`.
    pub sidecar_arrow_tpl: String,
    pub fallback_delay_ms: u32,
}

const GLOBAL_OBJECT: &str =
    r#"(typeof globalThis!=="undefined"?globalThis:typeof self!=="undefined"?self:this)"#;

impl Default for RuntimeTemplates {
    fn default() -> Self {
        let prologue = concat!(
            r#";/*jselide:prologue*/var {GLOBAL}=(function(g){var n="{GLOBAL}";"#,
            r#"if(g[n]&&typeof g[n].push==="function")return g[n];"#,
            r#"var a=[],k={KEY_JSON},u="{BEACON_URL}",sent=false;"#,
            r#"function send(){if(sent)return;sent=true;var s={},ids=[];"#,
            r#"for(var i=0;i<a.length;i++){if(!Object.prototype.hasOwnProperty.call(s,a[i])){s[a[i]]=1;ids.push(a[i]);}}"#,
            r#"var b=JSON.stringify({v:1,key:k,ids:ids,page:(g.location&&g.location.href)||null});"#,
            r#"try{if(g.navigator&&g.navigator.sendBeacon&&g.navigator.sendBeacon(u,b))return;}catch(e){}"#,
            r#"try{var x=new XMLHttpRequest();x.open("POST",u,false);x.setRequestHeader("Content-Type","application/json");x.send(b);}catch(e){}}"#,
            r#"function later(){setTimeout(send,0);}"#,
            r#"if(g.document&&typeof g.addEventListener==="function"){if(g.document.readyState==="complete")later();else g.addEventListener("load",later);}"#,
            r#"else{setTimeout(send,{FALLBACK_MS});}"#,
            r#"g[n]=a;return a;})"#,
        );
        let loader = concat!(
            r#";/*jselide:loader*/var {LOADER}=(function(g){var n="{LOADER}";"#,
            r#"if(typeof g[n]==="function")return g[n];var c={};"#,
            r#"function load(u){if(Object.prototype.hasOwnProperty.call(c,u))return c[u];"#,
            r#"var x=new XMLHttpRequest();"#,
            r#"try{x.open("GET",u,false);x.send(null);}catch(e){throw new Error("jselide: could not fetch elided function body "+u+": "+e);}"#,
            r#"if(x.status!==200)throw new Error("jselide: could not fetch elided function body "+u+" (HTTP "+x.status+")");"#,
            r#"return c[u]=x.responseText;}"#,
            r#"g[n]=load;return load;})"#,
        );
        Self {
            prologue_tpl: format!("{prologue}{GLOBAL_OBJECT};/*jselide:end*/"),
            marker_tpl: r#";try{{GLOBAL}.push("{FID}")}catch(__jselide_e){};"#.to_string(),
            loader_tpl: format!("{loader}{GLOBAL_OBJECT};/*jselide:end*/"),
            stub_tpl: r#"eval({LOADER}("{BODY_URL}"))"#.to_string(),
            sidecar_function_tpl: "({HEAD}(){ORIGINAL_BODY}).apply(this,arguments)".to_string(),
            sidecar_arrow_tpl: "({HEAD}{ORIGINAL_BODY})()".to_string(),
            fallback_delay_ms: 5000,
        }
    }
}

/// Fills `{NAME}` placeholders listed in `values`; anything else, including
/// unknown `{NAME}` tokens, is copied through unchanged.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .bytes()
            .take_while(|b| b.is_ascii_uppercase() || *b == b'_')
            .count();
        let closes = name_len > 0 && after.as_bytes().get(name_len) == Some(&b'}');
        let value = closes
            .then(|| &after[..name_len])
            .and_then(|name| values.iter().find(|(n, _)| *n == name))
            .map(|(_, v)| *v);
        match value {
            Some(v) => {
                out.push_str(v);
                rest = &after[name_len + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Name of the coverage array for `key`.
pub fn coverage_global(key: &ResourceKey) -> String {
    format!("__jselide_{}", key.short_hash())
}

/// Name of the sidecar loader for `key`.
pub fn loader_global(key: &ResourceKey) -> String {
    format!("__jselideL_{}", key.short_hash())
}

/// Function head used when wrapping an elided body.
pub fn wrapper_head(is_arrow: bool, is_async: bool, is_generator: bool) -> &'static str {
    match (is_arrow, is_async, is_generator) {
        (true, false, _) => "()=>",
        (true, true, _) => "async()=>",
        (false, false, false) => "function",
        (false, true, false) => "async function",
        (false, false, true) => "function*",
        (false, true, true) => "async function*",
    }
}

impl RuntimeTemplates {
    pub fn prologue(&self, key: &ResourceKey, beacon_url: &str) -> String {
        let key_json = serde_json::to_string(key).expect("key serializes");
        let delay = self.fallback_delay_ms.to_string();
        render(
            &self.prologue_tpl,
            &[
                ("GLOBAL", &coverage_global(key)),
                ("KEY_JSON", &key_json),
                ("BEACON_URL", &js_string_body(beacon_url)),
                ("FALLBACK_MS", &delay),
            ],
        )
    }

    pub fn marker(&self, key: &ResourceKey, fid: &str) -> String {
        render(&self.marker_tpl, &[("GLOBAL", &coverage_global(key)), ("FID", fid)])
    }

    pub fn loader(&self, key: &ResourceKey) -> String {
        render(&self.loader_tpl, &[("LOADER", &loader_global(key))])
    }

    pub fn stub_call(&self, key: &ResourceKey, body_url: &str) -> String {
        render(
            &self.stub_tpl,
            &[("LOADER", &loader_global(key)), ("BODY_URL", &js_string_body(body_url))],
        )
    }

    pub fn sidecar(&self, is_arrow: bool, is_async: bool, is_generator: bool, original_body: &str) -> String {
        let tpl = if is_arrow { &self.sidecar_arrow_tpl } else { &self.sidecar_function_tpl };
        render(
            tpl,
            &[
                ("HEAD", wrapper_head(is_arrow, is_async, is_generator)),
                ("ORIGINAL_BODY", original_body),
            ],
        )
    }
}

/// Escapes `s` for use between double quotes in JS source.
fn js_string_body(s: &str) -> String {
    let quoted = serde_json::to_string(s).expect("string serializes");
    quoted[1..quoted.len() - 1]
        .replace('\u{2028}', "\\u2028")
        .replace('\u{2029}', "\\u2029")
}
