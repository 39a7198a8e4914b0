"""Deterministic synthetic audit streams: benign background plus scripted attacks.

Benign activity comes in short per-process blocks so that one process's
events sit close together, as they do in real audit logs. Attack
campaigns are JSON templates (see ``campaigns/``) whose ``$NAME``
placeholders bind either to long-lived benign processes or to fresh
processes created by ``clone`` steps.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from ..events import AuditEvent, ObjectRef

CAMPAIGN_DIR = Path(__file__).parent / "campaigns"
CAMPAIGNS = ("w2", "f3", "l1", "benign")

START_TS = 1_473_400_000_000  # an arbitrary fixed epoch in ms

Row = tuple  # (seq, ts, kind, pid, exe, obj_name, obj_type, target_pid, attrs)


@dataclass
class GroundTruth:
    campaign: str
    entry: List[str] = field(default_factory=list)
    entities: List[str] = field(default_factory=list)
    attack_seqs: List[int] = field(default_factory=list)
    expected_alarms: List[List[str]] = field(default_factory=list)
    benign_events: int = 0
    total_events: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_campaign(name: str) -> dict:
    path = CAMPAIGN_DIR / f"{name}.json"
    if not path.exists():
        raise ValueError(f"unknown campaign {name!r}; choose from {', '.join(CAMPAIGNS)}")
    return json.loads(path.read_text(encoding="utf-8"))


# -- platform layouts -------------------------------------------------------------

def _linux_like(root: str, home: str, bash: str, firefox: str, desktop: str, updater: Optional[dict]) -> dict:
    profile = f"{home}/.mozilla/firefox/x7k2.default"
    return {
        "sep": "/",
        "home": home,
        "browser": firefox,
        "profile": [f"{profile}/{n}" for n in (
            "places.sqlite", "cookies.sqlite", "formhistory.sqlite", "sessionstore.jsonlz4", "prefs.js",
            "cert9.db", "key4.db", "permissions.sqlite", "favicons.sqlite", "webappsstore.sqlite",
            "storage.sqlite", "content-prefs.sqlite", "handlers.json", "xulstore.json", "times.json",
            "addons.json", "extensions.json", "search.json.mozlz4", "protections.sqlite",
            "SiteSecurityServiceState.txt", "sessionCheckpoints.json", "containers.json")],
        "cache": f"{home}/.cache/mozilla/firefox/x7k2.default/cache2/entries",
        "downloads": f"{home}/Downloads",
        "browser_libs": [f"{root}lib/libxul.so", f"{root}lib/libnss3.so", f"{root}lib/libgtk-3.so.0"],
        "desktop": desktop,
        "viewer": f"{root}bin/evince",
        "viewer_state": [f"{home}/.local/share/recently-used.xbel", f"{home}/.config/evince/print-settings",
                         f"{home}/.local/share/evince/ev-metadata.gvfs"],
        "shell": bash,
        "shell_rc": [f"{home}/.bashrc", f"{home}/.profile"],
        "history": f"{home}/.bash_history",
        "tools": {
            "ls": f"/bin/ls", "cat": "/bin/cat", "grep": f"{root}bin/grep", "vim": f"{root}bin/vim",
            "make": f"{root}bin/make", "cc": f"{root}bin/cc", "git": f"{root}bin/git", "python": f"{root}bin/python3",
            "wc": f"{root}bin/wc", "find": f"{root}bin/find", "less": f"{root}bin/less",
        },
        "libc": "/lib/libc.so.7" if root == "/usr/local/" else "/lib/x86_64-linux-gnu/libc.so.6",
        "project": f"{home}/src/project",
        "logger": "/usr/sbin/syslogd" if root == "/usr/local/" else "/usr/sbin/rsyslogd",
        "log_in": "/var/run/log" if root == "/usr/local/" else "/dev/log",
        "logs": ["/var/log/messages", "/var/log/auth.log", "/var/log/daemon.log"],
        "cron": "/usr/sbin/cron",
        "cron_scripts": ["/etc/periodic/daily/100.clean-disks", "/etc/cron.daily/logrotate",
                         "/etc/cron.daily/man-db"],
        "sshd": "/usr/sbin/sshd",
        "updater": updater,
    }


PLATFORMS: Dict[str, dict] = {
    "linux": _linux_like("/usr/", "/home/user", "/bin/bash", "/usr/bin/firefox", "/usr/bin/gnome-shell", {
        "exe": "/usr/bin/apt", "worker": "/usr/bin/dpkg", "mirror": "IP:91.189.91.38:80",
        "lists": [f"/var/lib/apt/lists/archive.ubuntu.com_dists_{d}_InRelease" for d in
                  ("focal", "focal-updates", "focal-security", "focal-backports")],
        "cache": "/var/cache/apt/archives",
        "targets": [f"/usr/lib/x86_64-linux-gnu/lib{n}.so" for n in ("ssl", "crypto", "curl", "xml2", "z", "png")],
        "status": "/var/lib/dpkg/status",
    }),
    "freebsd": _linux_like("/usr/local/", "/usr/home/user", "/usr/local/bin/bash", "/usr/local/bin/firefox",
                           "/usr/local/bin/xfce4-session", {
        "exe": "/usr/sbin/pkg", "worker": "/usr/sbin/pkg", "mirror": "IP:10.0.4.20:80",
        "lists": ["/var/db/pkg/repo-FreeBSD.sqlite"],
        "cache": "/var/cache/pkg",
        "targets": [f"/usr/local/lib/lib{n}.so" for n in ("ssl", "crypto", "curl", "xml2", "png")],
        "status": "/var/db/pkg/local.sqlite",
    }),
    "windows": {
        "sep": "\\",
        "home": "C:\\Users\\User1",
        "browser": "C:\\Program Files\\Mozilla Firefox\\firefox",
        "profile": ["C:\\Users\\User1\\AppData\\Roaming\\Mozilla\\Firefox\\Profiles\\x7k2.default\\" + n for n in (
            "places.sqlite", "cookies.sqlite", "formhistory.sqlite", "sessionstore.jsonlz4", "prefs.js",
            "cert9.db", "key4.db", "permissions.sqlite", "favicons.sqlite", "webappsstore.sqlite",
            "storage.sqlite", "content-prefs.sqlite", "handlers.json", "xulstore.json", "times.json",
            "addons.json", "extensions.json", "search.json.mozlz4", "protections.sqlite",
            "SiteSecurityServiceState.txt", "sessionCheckpoints.json", "containers.json")],
        "cache": "C:\\Users\\User1\\AppData\\Local\\Mozilla\\Firefox\\Profiles\\x7k2.default\\cache2\\entries",
        "downloads": "C:\\Users\\User1\\Downloads",
        "browser_libs": ["C:\\Program Files\\Mozilla Firefox\\xul.dll", "C:\\Program Files\\Mozilla Firefox\\nss3.dll",
                         "C:\\Windows\\System32\\kernel32.dll"],
        "desktop": "C:\\Windows\\explorer.exe",
        "viewer": "C:\\Program Files\\Adobe\\Reader\\AcroRd32.exe",
        "viewer_state": ["C:\\Users\\User1\\AppData\\Roaming\\Adobe\\Acrobat\\DC\\SharedDataEvents",
                         "C:\\Users\\User1\\AppData\\Roaming\\Adobe\\Acrobat\\DC\\JSCache\\GlobData",
                         "C:\\Users\\User1\\AppData\\Roaming\\Microsoft\\Windows\\Recent\\AutomaticDestinations\\5f7b5f1e01b83767.automaticDestinations-ms"],
        "shell": "C:\\Windows\\System32\\WindowsPowerShell\\v1.0\\powershell.exe",
        "shell_rc": ["C:\\Users\\User1\\Documents\\WindowsPowerShell\\profile.ps1"],
        "history": "C:\\Users\\User1\\AppData\\Roaming\\Microsoft\\Windows\\PowerShell\\PSReadLine\\ConsoleHost_history.txt",
        "tools": {
            "ls": "C:\\Windows\\System32\\where.exe", "cat": "C:\\Windows\\System32\\more.com",
            "grep": "C:\\Windows\\System32\\findstr.exe", "vim": "C:\\Windows\\System32\\notepad.exe",
            "make": "C:\\Program Files\\Microsoft Visual Studio\\MSBuild.exe",
            "cc": "C:\\Program Files\\Microsoft Visual Studio\\cl.exe",
            "git": "C:\\Program Files\\TortoiseGit\\TortoiseGitProc.exe",
            "python": "C:\\Python39\\python.exe", "wc": "C:\\Windows\\System32\\sort.exe",
            "find": "C:\\Windows\\System32\\robocopy.exe", "less": "C:\\Windows\\System32\\write.exe",
        },
        "libc": "C:\\Windows\\System32\\ntdll.dll",
        "project": "C:\\Users\\User1\\Documents\\project",
        "logger": "C:\\Windows\\System32\\svchost.exe",
        "log_in": "\\\\.\\pipe\\eventlog",
        "logs": ["C:\\Windows\\System32\\winevt\\Logs\\Application.evtx",
                 "C:\\Windows\\System32\\winevt\\Logs\\System.evtx",
                 "C:\\Windows\\System32\\winevt\\Logs\\Microsoft-Windows-PowerShell%4Operational.evtx"],
        "cron": "C:\\Windows\\System32\\taskhostw.exe",
        "cron_scripts": ["C:\\Windows\\System32\\Tasks\\Microsoft\\Windows\\Defrag\\ScheduledDefrag",
                         "C:\\Windows\\System32\\Tasks\\Microsoft\\Windows\\Maintenance\\WinSAT"],
        "sshd": None,
        "updater": None,
    },
}


class _Proc:
    __slots__ = ("pid", "exe")

    def __init__(self, pid: int, exe: str):
        self.pid = pid
        self.exe = exe


class Generator:
    """Emits rows; ``stream`` yields them in order."""

    def __init__(self, platform: str, seed: int):
        self.p = PLATFORMS[platform]
        self.platform = platform
        self.rng = random.Random(seed)
        self.seq = 0
        self.ts = START_TS
        self.next_pid = 1000
        self.buf: List[Row] = []
        p = self.p
        self.browser = self._spawn(p["browser"])
        self.desktop = self._spawn(p["desktop"])
        self.shell = self._spawn(p["shell"])
        self.logger = self._spawn(p["logger"])
        self.cron = self._spawn(p["cron"])
        self.sshd = self._spawn(p["sshd"]) if p["sshd"] else None
        self.sites = [f"IP:{self.rng.choice((93, 104, 151, 172, 185, 199))}.{self.rng.randrange(256)}."
                      f"{self.rng.randrange(256)}.{self.rng.randrange(1, 255)}:443" for _ in range(160)]
        self.cache_files: List[str] = []
        self.sources = [f"{p['project']}{p['sep']}src{p['sep']}mod{i:03d}.c" for i in range(60)]
        self.headers = [f"{p['project']}{p['sep']}include{p['sep']}h{i:02d}.h" for i in range(20)]
        self.docs = [f"{p['home']}{p['sep']}Documents{p['sep']}notes{i:02d}.txt" for i in range(40)]
        self.downloads = 0
        self.browser_started = False
        self.preamble_done = False

    # -- primitives ------------------------------------------------------

    def _spawn(self, exe: str) -> _Proc:
        pid = self.next_pid
        self.next_pid += 1
        return _Proc(pid, exe)

    def emit(self, kind: str, proc: _Proc, name: Optional[str] = None, otype: Optional[str] = None,
             target: Optional[int] = None, attrs: Optional[dict] = None) -> int:
        self.seq += 1
        self.ts += self.rng.randrange(1, 4)
        self.buf.append((self.seq, self.ts, kind, proc.pid, proc.exe, name, otype, target, attrs))
        if kind == "exec":
            proc.exe = name
        return self.seq

    def pause(self, lo: int = 5, hi: int = 400) -> None:
        self.ts += self.rng.randrange(lo, hi)

    def child(self, parent: _Proc, exe: str) -> _Proc:
        c = self._spawn(parent.exe)
        self.emit("clone", parent, target=c.pid)
        self.emit("exec", c, exe, "file")
        self.emit("load", c, self.p["libc"], "file")
        return c

    # -- benign blocks ---------------------------------------------------

    def preamble(self) -> None:
        """Files that exist before the trace starts."""
        p = self.p
        names = list(p["profile"]) + list(p["viewer_state"]) + list(p["shell_rc"]) + [p["history"]]
        names += list(p["logs"]) + list(p["cron_scripts"]) + self.sources + self.headers + self.docs
        names += [f"{p['project']}{p['sep']}Makefile", f"{p['project']}{p['sep']}tools{p['sep']}report.py"]
        u = p["updater"]
        if u is not None:
            names += list(u["lists"]) + list(u["targets"]) + [u["status"]]
        for name in names:
            self.emit("define", self.desktop, name, "file")

    def tab(self) -> _Proc:
        """A content process for one site visit."""
        b, p = self.browser, self.p
        if not self.browser_started:
            for lib in p["browser_libs"]:
                self.emit("load", b, lib, "file")
            self.browser_started = True
        t = self._spawn(b.exe)
        self.emit("clone", b, target=t.pid)
        return t

    def new_cache_file(self) -> str:
        p = self.p
        cf = f"{p['cache']}{p['sep']}{self.rng.getrandbits(64):016X}"
        self.cache_files.append(cf)
        if len(self.cache_files) > 400:
            self.cache_files.pop(0)
        return cf

    def browse(self) -> None:
        r, p = self.rng, self.p
        t = self.tab()
        site = r.choice(self.sites)
        self.emit("connect", t, site, "socket")
        # follow-up requests go to the same site, so the tab never forks
        for _ in range(r.randrange(1, 5)):
            for _ in range(r.randrange(4, 24)):
                self.emit("read", t, site, "socket")
            for _ in range(r.randrange(1, 4)):
                cf = self.new_cache_file()
                for _ in range(r.randrange(1, 8)):
                    self.emit("write", t, cf, "file")
        if r.random() < 0.3:
            self.emit("write", t, r.choice(p["profile"]), "file")
        self.emit("exit", t)

    def revisit_cache(self) -> None:
        r = self.rng
        if len(self.cache_files) < 6:
            return self.browse()
        t = self.tab()
        for cf in r.sample(self.cache_files, r.randrange(2, 6)):
            self.emit("read", t, cf, "file")
        self.emit("exit", t)

    def download_pdf(self) -> None:
        r, p = self.rng, self.p
        t = self.tab()
        site = r.choice(self.sites)
        self.downloads += 1
        doc = f"{p['downloads']}{p['sep']}report-{self.downloads:04d}.pdf"
        self.emit("connect", t, site, "socket")
        for _ in range(r.randrange(4, 16)):
            self.emit("read", t, site, "socket")
        for _ in range(r.randrange(4, 16)):
            self.emit("write", t, doc, "file")
        self.emit("exit", t)
        self.pause(200, 3000)
        v = self.child(self.desktop, p["viewer"])
        for _ in range(r.randrange(4, 24)):
            self.emit("read", v, doc, "file")
        for st in r.sample(p["viewer_state"], r.randrange(1, len(p["viewer_state"]) + 1)):
            self.emit("write", v, st, "file")
        self.emit("exit", v)

    def shell_cmd(self) -> None:
        r, p, sh = self.rng, self.p, self.shell
        t = p["tools"]
        if r.random() < 0.02:
            for rc in p["shell_rc"]:
                self.emit("read", sh, rc, "file")
        tool = r.choice(("ls", "cat", "grep", "wc", "find", "less", "git", "python"))
        c = self.child(sh, t[tool])
        if tool in ("ls", "find"):
            for _ in range(r.randrange(2, 10)):
                self.emit("read", c, r.choice(self.docs), "file")
        elif tool in ("cat", "less", "wc"):
            f = r.choice(self.docs + self.sources)
            for _ in range(r.randrange(1, 16)):
                self.emit("read", c, f, "file")
        elif tool == "grep":
            for f in r.sample(self.sources, r.randrange(3, 12)):
                for _ in range(r.randrange(1, 5)):
                    self.emit("read", c, f, "file")
        elif tool == "git":
            for f in r.sample(self.sources, r.randrange(2, 8)):
                for _ in range(r.randrange(1, 4)):
                    self.emit("read", c, f, "file")
            idx = f"{p['project']}{p['sep']}.git{p['sep']}index"
            self.emit("write", c, idx, "file")
        else:
            script = f"{p['project']}{p['sep']}tools{p['sep']}report.py"
            self.emit("read", c, script, "file")
            for f in r.sample(self.docs, 2):
                self.emit("read", c, f, "file")
            out = f"{p['project']}{p['sep']}out{p['sep']}report-{self.seq}.txt"
            for _ in range(r.randrange(1, 4)):
                self.emit("write", c, out, "file")
        self.emit("exit", c)
        if r.random() < 0.2:
            # history is appended, never read back by the running shell
            self.emit("write", sh, p["history"], "file")

    def edit(self) -> None:
        r, p = self.rng, self.p
        c = self.child(self.shell, p["tools"]["vim"])
        f = r.choice(self.sources + self.docs)
        swap = f + ".swp"
        self.emit("read", c, f, "file")
        for _ in range(r.randrange(3, 15)):
            self.emit("write", c, swap, "file")
        for _ in range(r.randrange(1, 3)):
            self.emit("write", c, f, "file")
        self.emit("rm", c, swap, "file")
        self.emit("exit", c)

    def build(self) -> None:
        r, p = self.rng, self.p
        mk = self.child(self.shell, p["tools"]["make"])
        self.emit("read", mk, f"{p['project']}{p['sep']}Makefile", "file")
        for src in r.sample(self.sources, r.randrange(1, 5)):
            cc = self.child(mk, p["tools"]["cc"])
            for _ in range(r.randrange(2, 8)):
                self.emit("read", cc, src, "file")
            for h in r.sample(self.headers, r.randrange(2, 6)):
                self.emit("read", cc, h, "file")
            obj = src[:-2] + ".o"
            for _ in range(r.randrange(1, 4)):
                self.emit("write", cc, obj, "file")
            self.emit("exit", cc)
        self.emit("exit", mk)

    def daemon_log(self) -> None:
        r, p, lg = self.rng, self.p, self.logger
        for _ in range(r.randrange(4, 24)):
            self.emit("read", lg, p["log_in"], "pipe")
            self.emit("write", lg, r.choice(p["logs"]), "file")

    def cron_job(self) -> None:
        r, p = self.rng, self.p
        script = r.choice(p["cron_scripts"])
        c = self.child(self.cron, "/bin/sh" if p["sep"] == "/" else p["cron"])
        self.emit("read", c, script, "file")
        if p["sep"] == "/":
            t = self.child(c, p["tools"]["find"])
            for _ in range(r.randrange(2, 6)):
                self.emit("read", t, r.choice(self.docs), "file")
            self.emit("exit", t)
        self.emit("exit", c)

    def ssh_login(self) -> None:
        r, p, sshd = self.rng, self.p, self.sshd
        if sshd is None:
            return self.shell_cmd()
        peer = f"IP:10.0.{r.randrange(1, 8)}.{r.randrange(2, 250)}:{r.randrange(40000, 60000)}"
        conn = self._spawn(sshd.exe)
        self.emit("clone", sshd, target=conn.pid)
        self.emit("accept", conn, peer, "socket")
        for _ in range(r.randrange(2, 5)):
            self.emit("read", conn, peer, "socket")
        s = self._spawn(sshd.exe)
        self.emit("clone", conn, target=s.pid)
        self.emit("setuid", s, target=s.pid)
        self.emit("exec", s, p["shell"], "file")
        for rc in p["shell_rc"]:
            self.emit("read", s, rc, "file")
        for _ in range(r.randrange(1, 4)):
            c = self.child(s, p["tools"][r.choice(("ls", "cat", "wc"))])
            self.emit("read", c, r.choice(self.docs), "file")
            self.emit("exit", c)
        # remote sessions belong to a separate operator account
        self.emit("write", s, p["history"].replace(p["home"], p["home"].rsplit("/", 1)[0] + "/ops"), "file")
        self.emit("exit", s)
        self.emit("exit", conn)

    def scanner(self) -> None:
        r, sshd = self.rng, self.sshd
        if sshd is None:
            return self.daemon_log()
        peer = f"IP:{r.choice((45, 61, 112, 185, 222))}.{r.randrange(256)}.{r.randrange(256)}.{r.randrange(1, 255)}:{r.randrange(30000, 65000)}"
        conn = self._spawn(sshd.exe)
        self.emit("clone", sshd, target=conn.pid)
        self.emit("accept", conn, peer, "socket")
        self.emit("read", conn, peer, "socket")
        self.emit("exit", conn)

    def update(self) -> None:
        r, p = self.rng, self.p
        u = p["updater"]
        if u is None:
            return self.daemon_log()
        apt = self.child(self.cron if p["sep"] == "/" else self.shell, u["exe"])
        self.emit("connect", apt, u["mirror"], "socket")
        for _ in range(r.randrange(3, 8)):
            self.emit("read", apt, u["mirror"], "socket")
        for lst in u["lists"]:
            self.emit("write", apt, lst, "file")
        pkgs = []
        for _ in range(r.randrange(1, 3)):
            deb = f"{u['cache']}/pkg-{self.seq}.deb"
            pkgs.append(deb)
            for _ in range(r.randrange(2, 5)):
                self.emit("write", apt, deb, "file")
        if u["worker"] != u["exe"]:
            w = self.child(apt, u["worker"])
        else:
            w = apt
        self.emit("read", w, u["status"], "file")
        for deb in pkgs:
            self.emit("read", w, deb, "file")
        for tgt in r.sample(u["targets"], r.randrange(1, 3)):
            self.emit("write", w, tgt, "file")
        self.emit("write", w, u["status"], "file")
        if w is not apt:
            self.emit("exit", w)
        self.emit("exit", apt)

    BLOCKS = (
        ("browse", 26), ("revisit_cache", 4), ("download_pdf", 2), ("shell_cmd", 30), ("edit", 3),
        ("build", 5), ("daemon_log", 14), ("cron_job", 3), ("ssh_login", 3), ("scanner", 3),
        ("update", 1),
    )

    def benign_block(self) -> None:
        if not self.preamble_done:
            self.preamble_done = True
            self.preamble()
            return
        names = [b[0] for b in self.BLOCKS]
        weights = [b[1] for b in self.BLOCKS]
        getattr(self, self.rng.choices(names, weights)[0])()
        self.pause()

    # -- attacks -----------------------------------------------------------

    def bind_roles(self) -> Dict[str, _Proc]:
        roles = {"$BROWSER": self.browser, "$DESKTOP": self.desktop, "$SHELL": self.shell}
        if self.sshd is not None:
            roles["$SSHD"] = self.sshd
        return roles

    def run_phase(self, steps: List[dict], procs: Dict[str, _Proc]) -> List[int]:
        seqs = []
        for st in steps:
            kind = st["k"]
            proc = procs[st["p"]]
            for _ in range(st.get("n", 1)):
                if kind == "clone":
                    c = self._spawn(proc.exe)
                    procs[st["child"]] = c
                    seqs.append(self.emit("clone", proc, target=c.pid))
                elif kind == "setuid":
                    seqs.append(self.emit("setuid", proc, target=procs[st["target"]].pid))
                elif kind == "exit":
                    seqs.append(self.emit("exit", proc))
                else:
                    seqs.append(self.emit(kind, proc, st["o"], st["t"], attrs=st.get("a")))
        return seqs


def generate(campaign: str, benign_events: int, seed: int) -> Tuple[Iterator[Row], GroundTruth]:
    """Rows for one campaign plus its ground truth.

    The ground truth's ``attack_seqs`` and totals are filled in as the
    iterator is consumed.
    """
    if benign_events < 0:
        raise ValueError("benign_events must be >= 0")
    spec = load_campaign(campaign)
    truth = GroundTruth(campaign, list(spec["truth"]["entry"]), list(spec["truth"]["entities"]),
                        [], [list(a) for a in spec["truth"]["expected_alarms"]])
    gen = Generator(spec["platform"], seed)
    phases = spec["phases"]

    def rows() -> Iterator[Row]:
        # attack phases land between 30% and 80% of the benign stream
        n = len(phases)
        marks = [int(benign_events * (0.3 + 0.5 * i / max(n - 1, 1))) for i in range(n)] if n else []
        procs = gen.bind_roles()
        benign = 0
        phase = 0
        while benign < benign_events or phase < n:
            if phase < n and benign >= marks[phase]:
                truth.attack_seqs.extend(gen.run_phase(phases[phase], procs))
                phase += 1
                gen.pause()
            else:
                gen.benign_block()
                take = gen.buf
                if benign + len(take) > benign_events:
                    take = take[:benign_events - benign]
                benign += len(take)
                gen.buf = take
            yield from gen.buf
            gen.buf = []
        truth.benign_events = benign

    return _Counted(rows(), truth), truth


class _Counted:
    """Row iterator that keeps ground-truth totals in step with emitted rows."""

    def __init__(self, it: Iterator[Row], truth: GroundTruth):
        self.it = it
        self.truth = truth
        self.count = 0

    def __iter__(self):
        return self

    def __next__(self) -> Row:
        row = next(self.it)
        self.count += 1
        self.truth.total_events = self.count
        return row


def row_to_event(row: Row, seq: Optional[int] = None) -> AuditEvent:
    s, ts, kind, pid, exe, name, otype, target, attrs = row
    obj = ObjectRef(name, otype) if name is not None else None
    return AuditEvent(s if seq is None else seq, ts, kind, pid, exe, obj, target, attrs)


def gen_campaign(campaign: str, benign_events: int, seed: int) -> Tuple[List[AuditEvent], GroundTruth]:
    rows, truth = generate(campaign, benign_events, seed)
    return [row_to_event(r) for r in rows], truth
